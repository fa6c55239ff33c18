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

#include "refscore/corpus.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <random>
#include <set>
#include <unordered_set>

#include <fmt/format.h>
#include <json.hpp>

#include "refscore/error.hpp"
#include "text_util.hpp"

namespace refscore {
namespace {

using nlohmann::ordered_json;

constexpr std::array<std::string_view, 7> kCsvColumns = {
    "id", "title", "abstract", "unit", "main_panel", "department_id", "year"};

std::optional<long long> parse_integer(std::string_view text) {
  text = detail::trim(text);
  long long value = 0;
  const auto [ptr, ec] =
      std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
    return std::nullopt;
  }
  return value;
}

std::optional<double> parse_real(std::string_view text) {
  text = detail::trim(text);
  if (text.empty()) return std::nullopt;
  // from_chars for double is missing in libstdc++ 11.
  std::string owned(text);
  char* end = nullptr;
  const double value = std::strtod(owned.c_str(), &end);
  if (end != owned.c_str() + owned.size()) return std::nullopt;
  return value;
}

// Fills the panel from the unit when absent, and checks consistency when
// present.
void resolve_panel(Article& article, std::optional<std::string_view> panel,
                   std::optional<std::size_t> line) {
  if (article.unit < kMinUnit || article.unit > kMaxUnit) {
    throw ValidationError(
        fmt::format("unit must be in 1..34, got {}", article.unit), line,
        "unit");
  }
  const MainPanel expected = panel_for_unit(article.unit);
  if (!panel || detail::trim(*panel).empty()) {
    article.main_panel = expected;
    return;
  }
  const auto parsed = panel_from_letter(*panel);
  if (!parsed) {
    throw ValidationError(
        fmt::format("main_panel must be one of A,B,C,D, got '{}'", *panel),
        line, "main_panel");
  }
  if (*parsed != expected) {
    throw ValidationError(
        fmt::format("main_panel {} does not match unit {} (panel {})",
                    panel_letter(*parsed), article.unit,
                    panel_letter(expected)),
        line, "main_panel");
  }
  article.main_panel = *parsed;
}

void validate_at(const Article& article, std::optional<std::size_t> line) {
  if (detail::trim(article.id).empty()) {
    throw ValidationError("id must be nonempty", line, "id");
  }
  if (detail::trim(article.title).empty()) {
    throw ValidationError("title must be nonempty", line, "title");
  }
  if (detail::trim(article.abstract).empty()) {
    throw ValidationError("abstract must be nonempty", line, "abstract");
  }
  if (article.unit < kMinUnit || article.unit > kMaxUnit) {
    throw ValidationError(
        fmt::format("unit must be in 1..34, got {}", article.unit), line,
        "unit");
  }
  if (article.main_panel != panel_for_unit(article.unit)) {
    throw ValidationError("main_panel does not match unit", line,
                          "main_panel");
  }
  if (detail::trim(article.department_id).empty()) {
    throw ValidationError("department_id must be nonempty", line,
                          "department_id");
  }
  if (article.year <= 0) {
    throw ValidationError(
        fmt::format("year must be positive, got {}", article.year), line,
        "year");
  }
}

std::string require_string(const ordered_json& object, const char* key,
                           std::size_t line) {
  const auto it = object.find(key);
  if (it == object.end() || it->is_null()) {
    throw ValidationError(fmt::format("missing field '{}'", key), line, key);
  }
  if (!it->is_string()) {
    throw ValidationError(fmt::format("field '{}' must be a string", key),
                          line, key);
  }
  return it->get<std::string>();
}

int require_int(const ordered_json& object, const char* key,
                std::size_t line) {
  const auto it = object.find(key);
  if (it == object.end() || it->is_null()) {
    throw ValidationError(fmt::format("missing field '{}'", key), line, key);
  }
  if (it->is_number_integer()) return it->get<int>();
  if (it->is_string()) {
    if (auto value = parse_integer(it->get<std::string>())) {
      return static_cast<int>(*value);
    }
  }
  throw ValidationError(fmt::format("field '{}' must be an integer", key),
                        line, key);
}

Article article_from_json(const ordered_json& object, std::size_t line) {
  if (!object.is_object()) {
    throw ValidationError("expected a JSON object", line);
  }
  Article article;
  article.id = require_string(object, "id", line);
  article.title = require_string(object, "title", line);
  article.abstract = require_string(object, "abstract", line);
  article.unit = require_int(object, "unit", line);
  article.department_id = require_string(object, "department_id", line);
  article.year = require_int(object, "year", line);
  std::optional<std::string> panel;
  if (const auto it = object.find("main_panel");
      it != object.end() && !it->is_null()) {
    if (!it->is_string()) {
      throw ValidationError("field 'main_panel' must be a string", line,
                            "main_panel");
    }
    panel = it->get<std::string>();
  }
  resolve_panel(article, panel, line);
  validate_at(article, line);
  return article;
}

std::vector<Article> parse_jsonl(std::string_view text) {
  std::vector<Article> articles;
  std::size_t line = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = text.find('\n', start);
    const auto raw = text.substr(
        start, end == std::string_view::npos ? std::string_view::npos
                                              : end - start);
    ++line;
    if (!detail::trim(raw).empty()) {
      ordered_json object;
      try {
        object = ordered_json::parse(raw);
      } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(fmt::format("JSON parse error: {}", e.what()),
                              line);
      }
      articles.push_back(article_from_json(object, line));
    }
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return articles;
}

std::vector<Article> parse_csv_corpus(std::string_view text) {
  const auto rows = detail::parse_csv(text);
  if (rows.empty()) return {};
  const auto& header = rows.front().fields;
  std::array<int, kCsvColumns.size()> index;
  index.fill(-1);
  for (std::size_t c = 0; c < header.size(); ++c) {
    const auto name = detail::trim(header[c]);
    for (std::size_t k = 0; k < kCsvColumns.size(); ++k) {
      if (name == kCsvColumns[k]) index[k] = static_cast<int>(c);
    }
  }
  for (std::size_t k = 0; k < kCsvColumns.size(); ++k) {
    if (index[k] < 0 && kCsvColumns[k] != "main_panel") {
      throw ValidationError(
          fmt::format("CSV header lacks column '{}'", kCsvColumns[k]),
          rows.front().line, std::string(kCsvColumns[k]));
    }
  }

  std::vector<Article> articles;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.fields.size() != header.size()) {
      throw ValidationError(
          fmt::format("expected {} fields, found {}", header.size(),
                      row.fields.size()),
          row.line);
    }
    auto cell = [&](std::size_t k) -> std::optional<std::string> {
      if (index[k] < 0) return std::nullopt;
      return row.fields[static_cast<std::size_t>(index[k])];
    };
    auto integer_cell = [&](std::size_t k) {
      const auto value = parse_integer(*cell(k));
      if (!value) {
        throw ValidationError(
            fmt::format("field '{}' must be an integer", kCsvColumns[k]),
            row.line, std::string(kCsvColumns[k]));
      }
      return static_cast<int>(*value);
    };
    Article article;
    article.id = *cell(0);
    article.title = *cell(1);
    article.abstract = *cell(2);
    article.unit = integer_cell(3);
    article.department_id = *cell(5);
    article.year = integer_cell(6);
    const auto panel = cell(4);
    resolve_panel(article,
                  panel ? std::optional<std::string_view>(*panel)
                        : std::nullopt,
                  row.line);
    validate_at(article, row.line);
    articles.push_back(std::move(article));
  }
  return articles;
}

// Line numbers of duplicates are not tracked past parsing; report the id.
void reject_duplicates(const std::vector<Article>& articles) {
  std::unordered_set<std::string> seen;
  for (const auto& article : articles) {
    if (!seen.insert(article.id).second) {
      throw ValidationError(fmt::format("duplicate article id '{}'", article.id),
                            std::nullopt, "id");
    }
  }
}

}  // namespace

MainPanel panel_for_unit(int unit) {
  if (unit >= 1 && unit <= 6) return MainPanel::kA;
  if (unit >= 7 && unit <= 12) return MainPanel::kB;
  if (unit >= 13 && unit <= 24) return MainPanel::kC;
  if (unit >= 25 && unit <= 34) return MainPanel::kD;
  throw ValidationError(fmt::format("unit must be in 1..34, got {}", unit),
                        std::nullopt, "unit");
}

char panel_letter(MainPanel panel) {
  switch (panel) {
    case MainPanel::kA: return 'A';
    case MainPanel::kB: return 'B';
    case MainPanel::kC: return 'C';
    case MainPanel::kD: return 'D';
  }
  return '?';
}

std::optional<MainPanel> panel_from_letter(std::string_view text) {
  text = detail::trim(text);
  if (text.size() != 1) return std::nullopt;
  switch (text[0]) {
    case 'A': case 'a': return MainPanel::kA;
    case 'B': case 'b': return MainPanel::kB;
    case 'C': case 'c': return MainPanel::kC;
    case 'D': case 'd': return MainPanel::kD;
    default: return std::nullopt;
  }
}

void validate_article(const Article& article) {
  validate_at(article, std::nullopt);
}

std::optional<CorpusFormat> corpus_format_from_string(std::string_view text) {
  if (text == "jsonl") return CorpusFormat::kJsonl;
  if (text == "csv") return CorpusFormat::kCsv;
  return std::nullopt;
}

CorpusFormat guess_corpus_format(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? CorpusFormat::kCsv : CorpusFormat::kJsonl;
}

std::vector<Article> parse_corpus(std::string_view text, CorpusFormat format) {
  auto articles = format == CorpusFormat::kCsv ? parse_csv_corpus(text)
                                               : parse_jsonl(text);
  reject_duplicates(articles);
  return articles;
}

std::vector<Article> load_corpus(const std::filesystem::path& path,
                                 CorpusFormat format) {
  return parse_corpus(detail::read_file(path.string()), format);
}

std::string serialize_corpus(const std::vector<Article>& articles,
                             CorpusFormat format) {
  std::string out;
  if (format == CorpusFormat::kJsonl) {
    for (const auto& a : articles) {
      ordered_json object;
      object["id"] = a.id;
      object["title"] = a.title;
      object["abstract"] = a.abstract;
      object["unit"] = a.unit;
      object["main_panel"] = std::string(1, panel_letter(a.main_panel));
      object["department_id"] = a.department_id;
      object["year"] = a.year;
      out += object.dump();
      out += '\n';
    }
    return out;
  }
  out = "id,title,abstract,unit,main_panel,department_id,year\n";
  for (const auto& a : articles) {
    out += fmt::format("{},{},{},{},{},{},{}\n", detail::csv_field(a.id),
                       detail::csv_field(a.title),
                       detail::csv_field(a.abstract), a.unit,
                       panel_letter(a.main_panel),
                       detail::csv_field(a.department_id), a.year);
  }
  return out;
}

void write_corpus(const std::filesystem::path& path,
                  const std::vector<Article>& articles, CorpusFormat format) {
  detail::write_file(path.string(), serialize_corpus(articles, format));
}

ProxyTable parse_proxy_scores(std::string_view text) {
  ProxyTable table;
  const auto rows = detail::parse_csv(text);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.fields.size() != 3) {
      throw ValidationError(
          fmt::format("expected 3 fields (dept,unit,mean), found {}",
                      row.fields.size()),
          row.line);
    }
    const auto unit = parse_integer(row.fields[1]);
    if (!unit) {
      // A non-numeric unit on the first row is a header.
      if (r == 0) continue;
      throw ValidationError("unit must be an integer", row.line, "unit");
    }
    if (*unit < kMinUnit || *unit > kMaxUnit) {
      throw ValidationError(fmt::format("unit must be in 1..34, got {}", *unit),
                            row.line, "unit");
    }
    const auto mean = parse_real(row.fields[2]);
    if (!mean) {
      throw ValidationError("mean score must be a number", row.line,
                            "mean_score");
    }
    if (!(*mean >= 1.0 && *mean <= 4.0)) {
      throw ValidationError(
          fmt::format("mean score {} outside [1,4]", row.fields[2]), row.line,
          "mean_score");
    }
    const std::string dept(detail::trim(row.fields[0]));
    if (dept.empty()) {
      throw ValidationError("department_id must be nonempty", row.line,
                            "department_id");
    }
    ProxyKey key{dept, static_cast<int>(*unit)};
    if (!table.emplace(key, *mean).second) {
      throw ValidationError(
          fmt::format("duplicate proxy key ({}, {})", dept, *unit), row.line,
          "department_id");
    }
  }
  return table;
}

ProxyTable load_proxy_scores(const std::filesystem::path& path) {
  return parse_proxy_scores(detail::read_file(path.string()));
}

std::string serialize_proxy_scores(const ProxyTable& table) {
  std::string out = "department_id,unit,mean_score\n";
  for (const auto& [key, mean] : table) {
    out += fmt::format("{},{},{}\n", detail::csv_field(key.department_id),
                       key.unit, mean);
  }
  return out;
}

void write_proxy_scores(const std::filesystem::path& path,
                        const ProxyTable& table) {
  detail::write_file(path.string(), serialize_proxy_scores(table));
}

namespace {

constexpr std::array<std::string_view, 12> kAdjectives = {
    "Adaptive",   "Robust",     "Longitudinal", "Comparative",
    "Scalable",   "Integrated", "Empirical",    "Stochastic",
    "Historical", "Regional",   "Multimodal",   "Critical"};
constexpr std::array<std::string_view, 12> kSubjects = {
    "inference",   "dynamics",   "governance", "synthesis",
    "measurement", "networks",   "modelling",  "transitions",
    "signalling",  "resilience", "narratives", "catalysis"};
constexpr std::array<std::string_view, 12> kContexts = {
    "coastal ecosystems",   "urban housing",      "protein folding",
    "labour markets",       "rural schools",      "battery materials",
    "clinical trials",      "medieval archives",  "sensor arrays",
    "migration corridors",  "public health data", "river basins"};
constexpr std::array<std::string_view, 6> kFindings = {
    "We report a consistent effect across cohorts.",
    "The approach outperforms established baselines.",
    "Results are robust to alternative specifications.",
    "We identify three mechanisms driving the pattern.",
    "Implications for policy and practice are discussed.",
    "A public dataset accompanies the analysis."};

class Draws {
 public:
  explicit Draws(std::uint64_t seed) : engine_(seed) {}
  // Raw engine output is fully specified by the standard; the distribution
  // adaptors are not, so scaling is done here.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  std::size_t index(std::size_t bound) {
    return static_cast<std::size_t>(uniform01() * static_cast<double>(bound));
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace

SyntheticCorpus generate_synthetic_corpus(std::uint64_t seed, std::size_t n,
                                          const std::vector<int>& units) {
  if (units.empty()) throw ValidationError("empty unit list", std::nullopt, "units");
  if (n == 0) throw ValidationError("n must be at least 1", std::nullopt, "n");
  std::set<int> seen;
  for (int unit : units) {
    if (unit < kMinUnit || unit > kMaxUnit) {
      throw ValidationError(fmt::format("unit must be in 1..34, got {}", unit),
                            std::nullopt, "units");
    }
    if (!seen.insert(unit).second) {
      throw ValidationError(fmt::format("unit {} listed twice", unit),
                            std::nullopt, "units");
    }
  }

  Draws draws(seed);
  SyntheticCorpus out;
  std::vector<std::size_t> per_unit(units.size(), 0);
  for (std::size_t i = 0; i < n; ++i) ++per_unit[i % units.size()];

  std::vector<std::size_t> departments(units.size());
  for (std::size_t u = 0; u < units.size(); ++u) {
    departments[u] = std::clamp<std::size_t>(per_unit[u] / 12, 2, 10);
    const double spacing = 1.8 / static_cast<double>(departments[u] - 1);
    for (std::size_t d = 0; d < departments[u]; ++d) {
      const double jitter = (draws.uniform01() - 0.5) * 0.5 * spacing;
      const double mean =
          std::clamp(1.8 + spacing * static_cast<double>(d) + jitter, 1.0, 4.0);
      out.proxy.emplace(ProxyKey{fmt::format("inst-{:02}", d + 1), units[u]},
                        std::round(mean * 1000.0) / 1000.0);
    }
  }

  std::vector<std::size_t> assigned(units.size(), 0);
  out.articles.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t u = i % units.size();
    const std::size_t d = assigned[u]++ % departments[u];
    Article article;
    article.id = fmt::format("a{:05}", i + 1);
    article.title = fmt::format(
        "{} {} of {}", kAdjectives[draws.index(kAdjectives.size())],
        kSubjects[draws.index(kSubjects.size())],
        kContexts[draws.index(kContexts.size())]);
    const std::size_t sentences = 2 + draws.index(3);
    article.abstract = fmt::format(
        "This study examines {} in {}.",
        kSubjects[draws.index(kSubjects.size())],
        kContexts[draws.index(kContexts.size())]);
    for (std::size_t s = 0; s < sentences; ++s) {
      article.abstract += ' ';
      article.abstract += kFindings[draws.index(kFindings.size())];
    }
    article.unit = units[u];
    article.main_panel = panel_for_unit(units[u]);
    article.department_id = fmt::format("inst-{:02}", d + 1);
    article.year = 2014 + static_cast<int>(draws.index(7));
    out.articles.push_back(std::move(article));
  }
  return out;
}

std::vector<Article> drop_short_abstracts(const std::vector<Article>& articles,
                                          double fraction) {
  if (!(fraction >= 0.0 && fraction < 1.0)) {
    throw ValidationError("fraction must be in [0,1)", std::nullopt, "fraction");
  }
  std::map<int, std::vector<const Article*>> by_unit;
  for (const auto& a : articles) by_unit[a.unit].push_back(&a);
  std::unordered_set<std::string> dropped;
  for (auto& [unit, group] : by_unit) {
    std::sort(group.begin(), group.end(), [](const Article* l, const Article* r) {
      if (l->abstract.size() != r->abstract.size()) {
        return l->abstract.size() < r->abstract.size();
      }
      return l->id < r->id;
    });
    const auto k = static_cast<std::size_t>(
        std::floor(static_cast<double>(group.size()) * fraction));
    for (std::size_t i = 0; i < k; ++i) dropped.insert(group[i]->id);
  }
  std::vector<Article> kept;
  for (const auto& a : articles) {
    if (!dropped.count(a.id)) kept.push_back(a);
  }
  return kept;
}

}  // namespace refscore
