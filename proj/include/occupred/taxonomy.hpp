#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "occupred/errors.hpp"

namespace occupred {

struct OccupationEntry {
  std::string code;
  std::string title;

  bool operator==(const OccupationEntry&) const = default;
};

/// ranked[0] is always the target itself; the rest come from the related file
/// in rank order.
struct RelatedOccupationList {
  std::string target;
  std::vector<std::string> ranked;

  bool operator==(const RelatedOccupationList&) const = default;
};

class DanglingCode : public Error {
 public:
  DanglingCode(const std::string& code, std::size_t line)
      : Error("DanglingCode", "related list references unknown code " + code + " (line " +
                                  std::to_string(line) + ")"),
        code_(code) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

class UnknownTruthCode : public Error {
 public:
  explicit UnknownTruthCode(const std::string& code)
      : Error("UnknownTruthCode", "ground-truth code " + code + " is not in the taxonomy") {}
};

/// Lowercases, turns punctuation into spaces, and collapses whitespace.
std::string normalize_text(std::string_view text);

/// Immutable after construction; safe for concurrent reads.
class OccupationTaxonomy {
 public:
  OccupationTaxonomy() = default;

  /// Builds and validates a taxonomy. `related` maps target code to its
  /// related codes in rank order (rank 2 first, excluding the target).
  /// Aliases map alternative titles to codes. Throws DanglingCode or
  /// InvalidArgument.
  OccupationTaxonomy(std::vector<OccupationEntry> entries,
                     const std::map<std::string, std::vector<std::string>>& related = {},
                     const std::map<std::string, std::string>& aliases = {});

  const std::vector<OccupationEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  const OccupationEntry* find(std::string_view code) const;
  bool contains(std::string_view code) const { return find(code) != nullptr; }

  /// Throws UnknownTruthCode for codes outside the taxonomy.
  const RelatedOccupationList& related(std::string_view code) const;

  /// Exact match after normalization against canonical titles, aliases, and
  /// raw codes. No fuzzy matching.
  std::optional<OccupationEntry> normalize_title(std::string_view free_text) const;

  /// 1-based position of `predicted` in ranked(truth), none when absent.
  std::optional<std::size_t> related_rank(std::string_view truth, std::string_view predicted) const;

  const std::map<std::string, std::string>& aliases() const noexcept { return aliases_; }

 private:
  std::vector<OccupationEntry> entries_;
  std::unordered_map<std::string, std::size_t> by_code_;
  std::unordered_map<std::string, RelatedOccupationList> related_;
  std::unordered_map<std::string, std::string> title_index_;
  std::map<std::string, std::string> aliases_;
};

/// Occupations file: header row, then (code, title[, aliases]) where aliases
/// are '|'-separated. Related file: header row, then (target_code,
/// related_code, rank) with ranks contiguous from 2 per target. Columns are
/// tab-separated, or comma-separated with optional double quotes when the
/// header has no tab. Throws ParseError (with line number) or DanglingCode.
OccupationTaxonomy load_taxonomy(const std::filesystem::path& occupations_file,
                                 const std::filesystem::path& related_file);
OccupationTaxonomy parse_taxonomy(std::istream& occupations, std::istream& related,
                                  const std::string& occupations_name = "occupations",
                                  const std::string& related_name = "related");

/// Inverse of load_taxonomy (tab-separated).
void save_taxonomy(const OccupationTaxonomy& taxonomy, const std::filesystem::path& occupations_file,
                   const std::filesystem::path& related_file);
std::string format_occupations_tsv(const OccupationTaxonomy& taxonomy);
std::string format_related_tsv(const OccupationTaxonomy& taxonomy);

/// Built-in fixture taxonomy: O*NET-SOC-style codes grouped into occupational
/// families, each code related to its family members in a fixed rank order.
OccupationTaxonomy fixture_taxonomy();

}  // namespace occupred
