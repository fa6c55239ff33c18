// Copyright 2026 The refscore Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "refscore/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "text_util.hpp"

namespace refscore {

using nlohmann::json;
using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Rank correlation

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return values[a] < values[b];
  });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    // positions i..j-1 (0-based) share rank mean((i+1)..j)
    const double rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw ValidationError(fmt::format("spearman: length mismatch ({} vs {})",
                                      x.size(), y.size()));
  }
  if (x.size() < 2) throw ValidationError("spearman: need at least 2 pairs");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) {
      throw ValidationError("spearman: non-finite value");
    }
  }
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  // Mean rank is (n+1)/2 regardless of ties.
  const double mean = (n + 1.0) / 2.0;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    const double dx = rx[i] - mean;
    const double dy = ry[i] - mean;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw UndefinedCorrelationError("spearman: constant input");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Profiles and consistency

std::string Profile::label() const {
  return fmt::format("{}-{}-{}-{}", pct[0], pct[1], pct[2], pct[3]);
}

Profile quantize(const ScoreDistribution& d) {
  Profile profile;
  for (int s = 1; s <= 4; ++s) {
    profile.pct[static_cast<std::size_t>(s - 1)] =
        static_cast<int>(std::lround(d[s] * 100.0));
  }
  return profile;
}

ConsistencyReport consistency_mad(std::span<const ScoredResult> results,
                                  bool include_flagged_tables) {
  std::map<std::string, std::vector<const ScoredResult*>> by_article;
  std::optional<Strategy> strategy;
  for (const auto& r : results) {
    if (strategy && *strategy != r.strategy) {
      throw ValidationError("consistency_mad needs results of one strategy");
    }
    strategy = r.strategy;
    if (r.usable(include_flagged_tables)) by_article[r.article_id].push_back(&r);
  }

  struct Accumulator {
    std::array<std::size_t, 4> counts{};
    std::size_t weight = 0;
  };
  std::map<Profile, Accumulator> pooled;
  ConsistencyReport report;
  for (const auto& [article, group] : by_article) {
    if (group.size() < 2) {
      ++report.single_iteration_articles;
      continue;
    }
    for (std::size_t j = 0; j < group.size(); ++j) {
      auto& acc = pooled[quantize(*group[j]->distribution)];
      ++acc.weight;
      for (std::size_t k = 0; k < group.size(); ++k) {
        if (k == j) continue;
        ++acc.counts[static_cast<std::size_t>(group[k]->winner - 1)];
      }
    }
  }

  double weighted_sum = 0.0;
  double plain_sum = 0.0;
  std::size_t total_weight = 0;
  for (const auto& [profile, acc] : pooled) {
    ConsistencyRow row;
    row.profile = profile;
    row.weight = acc.weight;
    row.observed_counts = acc.counts;
    const double total = static_cast<double>(
        std::accumulate(acc.counts.begin(), acc.counts.end(), std::size_t{0}));
    for (std::size_t s = 0; s < 4; ++s) {
      row.predicted_pct[s] = profile.pct[s];
      row.observed_pct[s] = 100.0 * static_cast<double>(acc.counts[s]) / total;
      row.mad += std::abs(row.predicted_pct[s] - row.observed_pct[s]);
    }
    weighted_sum += row.mad * static_cast<double>(row.weight);
    plain_sum += row.mad;
    total_weight += row.weight;
    report.rows.push_back(row);
  }
  std::sort(report.rows.begin(), report.rows.end(),
            [](const ConsistencyRow& a, const ConsistencyRow& b) {
              if (a.weight != b.weight) return a.weight > b.weight;
              return a.profile < b.profile;
            });
  if (total_weight > 0) {
    report.weighted_mean_mad = weighted_sum / static_cast<double>(total_weight);
    report.unweighted_mean_mad =
        plain_sum / static_cast<double>(report.rows.size());
  }
  return report;
}

PanelLookup panel_lookup(std::span<const Article> corpus) {
  PanelLookup lookup;
  for (const auto& a : corpus) lookup.emplace(a.id, a.main_panel);
  return lookup;
}

std::vector<ProfileCount> profile_histogram(std::span<const ScoredResult> results,
                                            const PanelLookup& panels,
                                            MainPanel panel, std::size_t k,
                                            bool include_flagged_tables) {
  std::map<Profile, std::size_t> counts;
  for (const auto& r : results) {
    if (!r.usable(include_flagged_tables)) continue;
    const auto it = panels.find(r.article_id);
    if (it == panels.end() || it->second != panel) continue;
    ++counts[quantize(*r.distribution)];
  }
  std::vector<ProfileCount> out;
  out.reserve(counts.size());
  for (const auto& [profile, count] : counts) out.push_back({profile, count});
  std::stable_sort(out.begin(), out.end(),
                   [](const ProfileCount& a, const ProfileCount& b) {
                     return a.count > b.count;
                   });
  if (out.size() > k) out.resize(k);
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

std::string_view series_name(ScoreSeries series) {
  return series == ScoreSeries::kWeighted ? "weighted" : "winner";
}

namespace {

struct Pairs {
  std::vector<double> score;
  std::vector<double> proxy;
};

struct Correlation {
  std::optional<double> rho;
  std::string skip_reason;
};

Correlation correlate(const Pairs& pairs) {
  if (pairs.score.size() < 2) {
    return {std::nullopt, fmt::format("n={} < 2", pairs.score.size())};
  }
  const auto constant = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v[0]; });
  };
  if (constant(pairs.proxy)) return {std::nullopt, "single proxy value (one department)"};
  if (constant(pairs.score)) return {std::nullopt, "constant scores"};
  return {spearman(pairs.score, pairs.proxy), {}};
}

constexpr std::array<Strategy, 3> kStrategies = {
    Strategy::kClassificationTable, Strategy::kTokenScore, Strategy::kStandard};
constexpr std::array<ScoreSeries, 2> kSeries = {ScoreSeries::kWeighted,
                                                ScoreSeries::kWinner};

}  // namespace

SpearmanReport evaluate(std::span<const ArticleScore> scores,
                        std::span<const Article> corpus,
                        const ProxyTable& proxy) {
  std::unordered_map<std::string, const Article*> by_id;
  for (const auto& a : corpus) by_id.emplace(a.id, &a);

  using SeriesKey = std::pair<Strategy, ScoreSeries>;
  std::map<std::tuple<Strategy, ScoreSeries, int, int>, Pairs> cells;
  std::map<std::tuple<Strategy, ScoreSeries, int>, Pairs> units;
  std::map<SeriesKey, Pairs> all;

  for (const auto& score : scores) {
    const auto it = by_id.find(score.article_id);
    if (it == by_id.end()) {
      throw ValidationError(
          fmt::format("scored article '{}' is not in the corpus", score.article_id),
          std::nullopt, "article_id");
    }
    const Article& article = *it->second;
    const auto proxy_it = proxy.find({article.department_id, article.unit});
    if (proxy_it == proxy.end()) {
      throw ValidationError(
          fmt::format("no proxy score for department '{}' in unit {}",
                      article.department_id, article.unit),
          std::nullopt, "department_id");
    }
    for (const auto series : kSeries) {
      const double value = series == ScoreSeries::kWeighted
                               ? score.mean_weighted_score
                               : score.mean_winner_score;
      for (Pairs* p : {&cells[{score.strategy, series, article.unit, article.year}],
                       &units[{score.strategy, series, article.unit}],
                       &all[{score.strategy, series}]}) {
        p->score.push_back(value);
        p->proxy.push_back(proxy_it->second);
      }
    }
  }

  SpearmanReport report;
  std::map<std::tuple<Strategy, ScoreSeries, int>, std::vector<double>> year_rhos;
  for (const auto& [key, pairs] : cells) {
    const auto& [strategy, series, unit, year] = key;
    const auto c = correlate(pairs);
    report.cells.push_back(
        {strategy, series, unit, year, pairs.score.size(), c.rho, c.skip_reason});
    if (c.rho) year_rhos[{strategy, series, unit}].push_back(*c.rho);
  }

  std::map<SeriesKey, std::vector<double>> unit_means;
  for (const auto& [key, pairs] : units) {
    const auto& [strategy, series, unit] = key;
    UnitSummary summary{strategy, series, unit, std::nullopt, 0, std::nullopt,
                        pairs.score.size()};
    if (const auto it = year_rhos.find(key); it != year_rhos.end()) {
      summary.years_used = it->second.size();
      summary.mean_over_years =
          std::accumulate(it->second.begin(), it->second.end(), 0.0) /
          static_cast<double>(it->second.size());
      unit_means[{strategy, series}].push_back(*summary.mean_over_years);
    }
    summary.pooled_rho = correlate(pairs).rho;
    report.units.push_back(summary);
  }

  for (const auto& [key, pairs] : all) {
    OverallSummary summary{key.first, key.second, correlate(pairs).rho,
                           pairs.score.size(), std::nullopt, 0};
    if (const auto it = unit_means.find(key); it != unit_means.end()) {
      summary.units_used = it->second.size();
      summary.mean_of_unit_means =
          std::accumulate(it->second.begin(), it->second.end(), 0.0) /
          static_cast<double>(it->second.size());
    }
    report.overall.push_back(summary);
  }
  return report;
}

EvalReport build_report(std::span<const ScoredResult> results,
                        std::span<const Article> corpus,
                        const ProxyTable& proxy, const EvalOptions& options) {
  if (results.empty()) throw ValidationError("scored table is empty");
  const auto panels = panel_lookup(corpus);
  for (const auto& r : results) {
    if (!panels.count(r.article_id)) {
      throw ValidationError(
          fmt::format("scored article '{}' is not in the corpus", r.article_id),
          std::nullopt, "article_id");
    }
  }

  EvalReport report;
  const auto summary = aggregate_all(results, options.include_flagged_tables);
  report.spearman = evaluate(summary.scores, corpus, proxy);

  for (const auto strategy : kStrategies) {
    std::vector<ScoredResult> subset;
    for (const auto& r : results) {
      if (r.strategy == strategy) subset.push_back(r);
    }
    if (subset.empty()) {
      report.notes.push_back(fmt::format(
          "no {} results; its Spearman, MAD and profile tables are absent",
          strategy_name(strategy)));
      continue;
    }

    StrategyCounts counts{strategy};
    counts.results = subset.size();
    for (const auto& r : subset) {
      if (r.usable(options.include_flagged_tables)) {
        ++counts.usable;
      } else {
        ++counts.flagged;
      }
    }
    for (const auto& s : summary.scores) counts.articles_scored += s.strategy == strategy;
    for (const auto& u : summary.unusable) counts.articles_unusable += u.second == strategy;
    report.counts.push_back(counts);
    if (counts.articles_unusable > 0) {
      report.notes.push_back(fmt::format(
          "{} {} article(s) had no usable iteration and were excluded",
          counts.articles_unusable, strategy_name(strategy)));
    }

    report.mad.push_back(
        {strategy, std::nullopt,
         consistency_mad(subset, options.include_flagged_tables)});
    for (const auto panel :
         {MainPanel::kA, MainPanel::kB, MainPanel::kC, MainPanel::kD}) {
      std::vector<ScoredResult> in_panel;
      for (const auto& r : subset) {
        if (panels.at(r.article_id) == panel) in_panel.push_back(r);
      }
      if (in_panel.empty()) continue;
      report.mad.push_back(
          {strategy, panel, consistency_mad(in_panel, options.include_flagged_tables)});
      report.profiles.push_back(
          {strategy, panel,
           profile_histogram(in_panel, panels, panel, options.top_k,
                             options.include_flagged_tables)});
    }
  }

  std::size_t skipped = 0;
  for (const auto& cell : report.spearman.cells) skipped += !cell.rho;
  if (skipped > 0) {
    report.notes.push_back(fmt::format(
        "{} (unit, year) cell(s) skipped; see skip_reason", skipped));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Output

namespace {

ordered_json optional_number(const std::optional<double>& v) {
  return v ? ordered_json(*v) : ordered_json();
}

std::string panel_name(const std::optional<MainPanel>& panel) {
  return panel ? std::string(1, panel_letter(*panel)) : std::string("all");
}

std::string fixed(const json& value, int digits = 4) {
  if (value.is_null()) return "-";
  return fmt::format("{:.{}f}", value.get<double>(), digits);
}

class TextTable {
 public:
  explicit TextTable(std::vector<std::string> header) {
    rows_.push_back(std::move(header));
  }
  void add(std::vector<std::string> row) { rows_.push_back(std::move(row)); }

  std::string render() const {
    std::vector<std::size_t> widths(rows_.front().size(), 0);
    for (const auto& row : rows_) {
      for (std::size_t c = 0; c < row.size(); ++c) {
        widths[c] = std::max(widths[c], row[c].size());
      }
    }
    std::string out;
    for (std::size_t r = 0; r < rows_.size(); ++r) {
      std::string line;
      for (std::size_t c = 0; c < rows_[r].size(); ++c) {
        if (c > 0) line += "  ";
        line += fmt::format("{:<{}}", rows_[r][c], widths[c]);
      }
      while (!line.empty() && line.back() == ' ') line.pop_back();
      out += line + '\n';
      if (r == 0) {
        std::size_t total = 0;
        for (auto w : widths) total += w;
        out += std::string(total + 2 * (widths.size() - 1), '-') + '\n';
      }
    }
    return out;
  }

 private:
  std::vector<std::vector<std::string>> rows_;
};

std::string csv_number(const json& value) {
  return value.is_null() ? std::string() : fmt::format("{:.6f}", value.get<double>());
}

std::string triple(const json& arr, int digits) {
  std::string out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (i) out += '/';
    out += fmt::format("{:.{}f}", arr[i].get<double>(), digits);
  }
  return out;
}

}  // namespace

ordered_json report_to_json(const EvalReport& report) {
  ordered_json out;
  auto counts = ordered_json::array();
  for (const auto& c : report.counts) {
    counts.push_back({{"strategy", strategy_name(c.strategy)},
                      {"results", c.results},
                      {"usable", c.usable},
                      {"flagged", c.flagged},
                      {"articles_scored", c.articles_scored},
                      {"articles_unusable", c.articles_unusable}});
  }
  out["counts"] = std::move(counts);

  ordered_json spearman_json;
  auto cells = ordered_json::array();
  for (const auto& c : report.spearman.cells) {
    cells.push_back({{"strategy", strategy_name(c.strategy)},
                     {"series", series_name(c.series)},
                     {"unit", c.unit},
                     {"year", c.year},
                     {"n", c.n},
                     {"rho", optional_number(c.rho)},
                     {"skip_reason", c.skip_reason}});
  }
  spearman_json["cells"] = std::move(cells);
  auto units = ordered_json::array();
  for (const auto& u : report.spearman.units) {
    units.push_back({{"strategy", strategy_name(u.strategy)},
                     {"series", series_name(u.series)},
                     {"unit", u.unit},
                     {"mean_over_years", optional_number(u.mean_over_years)},
                     {"years_used", u.years_used},
                     {"pooled_rho", optional_number(u.pooled_rho)},
                     {"pooled_n", u.pooled_n}});
  }
  spearman_json["units"] = std::move(units);
  auto overall = ordered_json::array();
  for (const auto& o : report.spearman.overall) {
    overall.push_back({{"strategy", strategy_name(o.strategy)},
                       {"series", series_name(o.series)},
                       {"pooled_rho", optional_number(o.pooled_rho)},
                       {"pooled_n", o.pooled_n},
                       {"mean_of_unit_means", optional_number(o.mean_of_unit_means)},
                       {"units_used", o.units_used}});
  }
  spearman_json["overall"] = std::move(overall);
  out["spearman"] = std::move(spearman_json);

  auto mad = ordered_json::array();
  for (const auto& m : report.mad) {
    auto rows = ordered_json::array();
    for (const auto& row : m.report.rows) {
      rows.push_back({{"profile", row.profile.label()},
                      {"profile_sum_ok", row.profile.sum_ok()},
                      {"predicted_pct", row.predicted_pct},
                      {"observed_pct", row.observed_pct},
                      {"observed_counts", row.observed_counts},
                      {"mad", row.mad},
                      {"weight", row.weight}});
    }
    mad.push_back({{"strategy", strategy_name(m.strategy)},
                   {"panel", panel_name(m.panel)},
                   {"weighted_mean_mad", optional_number(m.report.weighted_mean_mad)},
                   {"unweighted_mean_mad", optional_number(m.report.unweighted_mean_mad)},
                   {"single_iteration_articles", m.report.single_iteration_articles},
                   {"rows", std::move(rows)}});
  }
  out["mad"] = std::move(mad);

  auto profiles = ordered_json::array();
  for (const auto& p : report.profiles) {
    auto top = ordered_json::array();
    for (const auto& entry : p.top) {
      top.push_back({{"profile", entry.profile.label()}, {"count", entry.count}});
    }
    profiles.push_back({{"strategy", strategy_name(p.strategy)},
                        {"panel", std::string(1, panel_letter(p.panel))},
                        {"top", std::move(top)}});
  }
  out["profiles"] = std::move(profiles);
  out["notes"] = report.notes;
  return out;
}

std::string render_report_text(const json& report) {
  std::string out;
  auto section = [&](const std::string& title) {
    if (!out.empty()) out += '\n';
    out += "== " + title + " ==\n";
  };

  section("Results per strategy");
  TextTable counts({"strategy", "results", "usable", "flagged", "articles", "unusable"});
  for (const auto& c : report.at("counts")) {
    counts.add({c.at("strategy"), std::to_string(c.at("results").get<std::size_t>()),
                std::to_string(c.at("usable").get<std::size_t>()),
                std::to_string(c.at("flagged").get<std::size_t>()),
                std::to_string(c.at("articles_scored").get<std::size_t>()),
                std::to_string(c.at("articles_unusable").get<std::size_t>())});
  }
  out += counts.render();

  section("Spearman correlation with proxy, overall");
  TextTable overall({"strategy", "series", "pooled_rho", "n", "mean_of_unit_means", "units"});
  for (const auto& o : report.at("spearman").at("overall")) {
    overall.add({o.at("strategy"), o.at("series"), fixed(o.at("pooled_rho")),
                 std::to_string(o.at("pooled_n").get<std::size_t>()),
                 fixed(o.at("mean_of_unit_means")),
                 std::to_string(o.at("units_used").get<std::size_t>())});
  }
  out += overall.render();

  section("Spearman correlation with proxy, per unit");
  TextTable units({"strategy", "series", "unit", "mean_over_years", "years", "pooled_rho", "n"});
  for (const auto& u : report.at("spearman").at("units")) {
    units.add({u.at("strategy"), u.at("series"),
               std::to_string(u.at("unit").get<int>()), fixed(u.at("mean_over_years")),
               std::to_string(u.at("years_used").get<std::size_t>()),
               fixed(u.at("pooled_rho")),
               std::to_string(u.at("pooled_n").get<std::size_t>())});
  }
  out += units.render();

  section("Spearman correlation with proxy, per unit and year");
  TextTable cells({"strategy", "series", "unit", "year", "n", "rho", "skipped"});
  for (const auto& c : report.at("spearman").at("cells")) {
    cells.add({c.at("strategy"), c.at("series"),
               std::to_string(c.at("unit").get<int>()),
               std::to_string(c.at("year").get<int>()),
               std::to_string(c.at("n").get<std::size_t>()), fixed(c.at("rho")),
               c.at("skip_reason")});
  }
  out += cells.render();

  section("Internal consistency (MAD, percentage points)");
  TextTable mad({"strategy", "panel", "weighted_mean", "unweighted_mean", "profiles",
                 "single_iteration_articles"});
  for (const auto& m : report.at("mad")) {
    mad.add({m.at("strategy"), m.at("panel"), fixed(m.at("weighted_mean_mad"), 2),
             fixed(m.at("unweighted_mean_mad"), 2),
             std::to_string(m.at("rows").size()),
             std::to_string(m.at("single_iteration_articles").get<std::size_t>())});
  }
  out += mad.render();

  for (const auto& m : report.at("mad")) {
    if (m.at("panel") == "all" || m.at("rows").empty()) continue;
    section(fmt::format("Predicted vs observed, {} panel {} (top 20 by weight)",
                        m.at("strategy").get<std::string>(),
                        m.at("panel").get<std::string>()));
    TextTable rows({"profile", "weight", "predicted %", "observed %", "mad"});
    std::size_t shown = 0;
    for (const auto& row : m.at("rows")) {
      if (shown++ == 20) break;
      rows.add({row.at("profile"), std::to_string(row.at("weight").get<std::size_t>()),
                triple(row.at("predicted_pct"), 0), triple(row.at("observed_pct"), 1),
                fixed(row.at("mad"), 2)});
    }
    out += rows.render();
  }

  for (const auto& p : report.at("profiles")) {
    section(fmt::format("Most common profiles, {} panel {}",
                        p.at("strategy").get<std::string>(),
                        p.at("panel").get<std::string>()));
    TextTable top({"rank", "profile", "count"});
    std::size_t rank = 0;
    for (const auto& entry : p.at("top")) {
      top.add({std::to_string(++rank), entry.at("profile"),
               std::to_string(entry.at("count").get<std::size_t>())});
    }
    out += top.render();
  }

  if (!report.at("notes").empty()) {
    section("Notes");
    for (const auto& note : report.at("notes")) {
      out += "- " + note.get<std::string>() + '\n';
    }
  }
  return out;
}

void write_report(const std::filesystem::path& dir, const EvalReport& report) {
  std::filesystem::create_directories(dir);
  const auto j = report_to_json(report);
  detail::write_file((dir / "report.json").string(), j.dump(2) + "\n");
  detail::write_file((dir / "report.txt").string(), render_report_text(json::parse(j.dump())));

  std::string counts = "strategy,results,usable,flagged,articles_scored,articles_unusable\n";
  for (const auto& c : report.counts) {
    counts += fmt::format("{},{},{},{},{},{}\n", strategy_name(c.strategy), c.results,
                          c.usable, c.flagged, c.articles_scored, c.articles_unusable);
  }
  detail::write_file((dir / "counts.csv").string(), counts);

  std::string cells = "strategy,series,unit,year,n,rho,skip_reason\n";
  for (const auto& c : report.spearman.cells) {
    cells += fmt::format("{},{},{},{},{},{},{}\n", strategy_name(c.strategy),
                         series_name(c.series), c.unit, c.year, c.n,
                         csv_number(optional_number(c.rho)),
                         detail::csv_field(c.skip_reason));
  }
  detail::write_file((dir / "spearman_cells.csv").string(), cells);

  std::string units = "strategy,series,unit,mean_over_years,years_used,pooled_rho,pooled_n\n";
  for (const auto& u : report.spearman.units) {
    units += fmt::format("{},{},{},{},{},{},{}\n", strategy_name(u.strategy),
                         series_name(u.series), u.unit,
                         csv_number(optional_number(u.mean_over_years)), u.years_used,
                         csv_number(optional_number(u.pooled_rho)), u.pooled_n);
  }
  detail::write_file((dir / "spearman_units.csv").string(), units);

  std::string overall = "strategy,series,pooled_rho,pooled_n,mean_of_unit_means,units_used\n";
  for (const auto& o : report.spearman.overall) {
    overall += fmt::format("{},{},{},{},{},{}\n", strategy_name(o.strategy),
                           series_name(o.series), csv_number(optional_number(o.pooled_rho)),
                           o.pooled_n, csv_number(optional_number(o.mean_of_unit_means)),
                           o.units_used);
  }
  detail::write_file((dir / "spearman_overall.csv").string(), overall);

  std::string mad_summary =
      "strategy,panel,weighted_mean_mad,unweighted_mean_mad,profiles,single_iteration_articles\n";
  std::string mad_rows =
      "strategy,panel,profile,weight,pred1,pred2,pred3,pred4,obs1,obs2,obs3,obs4,mad\n";
  for (const auto& m : report.mad) {
    mad_summary += fmt::format(
        "{},{},{},{},{},{}\n", strategy_name(m.strategy), panel_name(m.panel),
        csv_number(optional_number(m.report.weighted_mean_mad)),
        csv_number(optional_number(m.report.unweighted_mean_mad)), m.report.rows.size(),
        m.report.single_iteration_articles);
    for (const auto& row : m.report.rows) {
      mad_rows += fmt::format(
          "{},{},{},{},{},{},{},{},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f}\n",
          strategy_name(m.strategy), panel_name(m.panel), row.profile.label(), row.weight,
          row.profile.pct[0], row.profile.pct[1], row.profile.pct[2], row.profile.pct[3],
          row.observed_pct[0], row.observed_pct[1], row.observed_pct[2],
          row.observed_pct[3], row.mad);
    }
  }
  detail::write_file((dir / "mad_summary.csv").string(), mad_summary);
  detail::write_file((dir / "mad_rows.csv").string(), mad_rows);

  std::string profiles = "strategy,panel,rank,profile,count\n";
  for (const auto& p : report.profiles) {
    std::size_t rank = 0;
    for (const auto& entry : p.top) {
      profiles += fmt::format("{},{},{},{},{}\n", strategy_name(p.strategy),
                              panel_letter(p.panel), ++rank, entry.profile.label(),
                              entry.count);
    }
  }
  detail::write_file((dir / "profiles.csv").string(), profiles);
}

}  // namespace refscore
