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

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace refscore {

// REF Main Panel. Each of the 34 Units of Assessment belongs to exactly one.
enum class MainPanel { kA, kB, kC, kD };

inline constexpr int kMinUnit = 1;
inline constexpr int kMaxUnit = 34;

// A:1-6, B:7-12, C:13-24, D:25-34. Throws ValidationError outside 1..34.
MainPanel panel_for_unit(int unit);
char panel_letter(MainPanel panel);
std::optional<MainPanel> panel_from_letter(std::string_view text);

struct Article {
  std::string id;
  std::string title;
  std::string abstract;
  int unit = 0;
  MainPanel main_panel = MainPanel::kA;
  std::string department_id;
  int year = 0;

  bool operator==(const Article&) const = default;
};

// Throws ValidationError naming the first failing field.
void validate_article(const Article& article);

enum class CorpusFormat { kJsonl, kCsv };

std::optional<CorpusFormat> corpus_format_from_string(std::string_view text);
// Picks the format from the file extension; defaults to JSONL.
CorpusFormat guess_corpus_format(const std::filesystem::path& path);

std::vector<Article> load_corpus(const std::filesystem::path& path,
                                 CorpusFormat format);
void write_corpus(const std::filesystem::path& path,
                  const std::vector<Article>& articles, CorpusFormat format);

// In-memory variants used by the file functions.
std::vector<Article> parse_corpus(std::string_view text, CorpusFormat format);
std::string serialize_corpus(const std::vector<Article>& articles,
                             CorpusFormat format);

struct ProxyKey {
  std::string department_id;
  int unit = 0;

  auto operator<=>(const ProxyKey&) const = default;
};

// Departmental mean quality score, in [1, 4].
using ProxyTable = std::map<ProxyKey, double>;

ProxyTable load_proxy_scores(const std::filesystem::path& path);
ProxyTable parse_proxy_scores(std::string_view text);
std::string serialize_proxy_scores(const ProxyTable& table);
void write_proxy_scores(const std::filesystem::path& path,
                        const ProxyTable& table);

struct SyntheticCorpus {
  std::vector<Article> articles;
  ProxyTable proxy;
};

// Deterministic for a fixed seed. Articles are spread round-robin over the
// units; each unit gets at least two departments with distinct means.
SyntheticCorpus generate_synthetic_corpus(std::uint64_t seed, std::size_t n,
                                          const std::vector<int>& units);

// Drops, per unit, the floor(n * fraction) articles with the shortest
// abstracts (ties broken by id). Order of the survivors is preserved.
std::vector<Article> drop_short_abstracts(const std::vector<Article>& articles,
                                          double fraction = 0.10);

}  // namespace refscore
