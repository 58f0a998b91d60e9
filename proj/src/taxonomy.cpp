#include "occupred/taxonomy.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "occupred/digest.hpp"
#include "occupred/history.hpp"

namespace occupred {

std::string normalize_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (unsigned char c : text) {
    const bool word = c >= 0x80 || std::isalnum(c);
    if (!word) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

OccupationTaxonomy::OccupationTaxonomy(std::vector<OccupationEntry> entries,
                                       const std::map<std::string, std::vector<std::string>>& related,
                                       const std::map<std::string, std::string>& aliases)
    : entries_(std::move(entries)), aliases_(aliases) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (e.code.empty()) throw InvalidArgument("taxonomy entry with empty code");
    if (normalize_text(e.title).empty()) throw InvalidArgument("taxonomy entry " + e.code + " has an empty title");
    if (!by_code_.emplace(e.code, i).second) throw InvalidArgument("duplicate taxonomy code " + e.code);
  }
  for (const auto& e : entries_) {
    auto key = normalize_text(e.title);
    auto [it, inserted] = title_index_.emplace(key, e.code);
    if (!inserted && it->second != e.code) {
      throw InvalidArgument("titles of " + it->second + " and " + e.code + " normalize identically");
    }
  }
  for (const auto& [alias, code] : aliases_) {
    if (!contains(code)) throw DanglingCode(code, 0);
    title_index_.emplace(normalize_text(alias), code);
  }
  for (const auto& e : entries_) {
    RelatedOccupationList list{e.code, {e.code}};
    if (auto it = related.find(e.code); it != related.end()) {
      for (const auto& code : it->second) {
        if (!contains(code)) throw DanglingCode(code, 0);
        if (std::find(list.ranked.begin(), list.ranked.end(), code) != list.ranked.end()) {
          throw InvalidArgument("duplicate related code " + code + " for " + e.code);
        }
        list.ranked.push_back(code);
      }
    }
    related_.emplace(e.code, std::move(list));
  }
  for (const auto& [target, _] : related) {
    if (!contains(target)) throw DanglingCode(target, 0);
  }
}

const OccupationEntry* OccupationTaxonomy::find(std::string_view code) const {
  auto it = by_code_.find(std::string(code));
  return it == by_code_.end() ? nullptr : &entries_[it->second];
}

const RelatedOccupationList& OccupationTaxonomy::related(std::string_view code) const {
  auto it = related_.find(std::string(code));
  if (it == related_.end()) throw UnknownTruthCode(std::string(code));
  return it->second;
}

std::optional<OccupationEntry> OccupationTaxonomy::normalize_title(std::string_view free_text) const {
  auto first = free_text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return std::nullopt;
  auto last = free_text.find_last_not_of(" \t\r\n");
  const auto trimmed = free_text.substr(first, last - first + 1);
  if (const auto* e = find(trimmed)) return *e;
  auto it = title_index_.find(normalize_text(trimmed));
  if (it == title_index_.end()) return std::nullopt;
  return *find(it->second);
}

std::optional<std::size_t> OccupationTaxonomy::related_rank(std::string_view truth,
                                                            std::string_view predicted) const {
  const auto& ranked = related(truth).ranked;
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    if (ranked[k] == predicted) return k + 1;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Delimited files

namespace {

struct Row {
  std::size_t line;
  std::vector<std::string> fields;
};

std::vector<std::string> split_fields(const std::string& line, char delim, const std::string& source,
                                      std::size_t line_no) {
  std::vector<std::string> fields;
  if (delim == '\t') {
    std::size_t pos = 0;
    while (true) {
      auto end = line.find('\t', pos);
      fields.push_back(line.substr(pos, end == std::string::npos ? std::string::npos : end - pos));
      if (end == std::string::npos) break;
      pos = end + 1;
    }
    return fields;
  }
  std::string cur;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"' && cur.empty() && !was_quoted) {
      quoted = was_quoted = true;
    } else if (c == delim) {
      fields.push_back(std::move(cur));
      cur.clear();
      was_quoted = false;
    } else {
      cur.push_back(c);
    }
  }
  if (quoted) throw ParseError(source, line_no, "unterminated quoted field");
  fields.push_back(std::move(cur));
  return fields;
}

std::string trim(std::string s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<Row> read_rows(std::istream& in, const std::string& source, std::size_t min_columns) {
  std::vector<Row> rows;
  std::string line;
  std::size_t line_no = 0;
  char delim = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    if (delim == 0) {
      delim = line.find('\t') != std::string::npos ? '\t' : ',';
      auto header = split_fields(line, delim, source, line_no);
      if (header.size() < min_columns) {
        throw ParseError(source, line_no, "header must have at least " + std::to_string(min_columns) + " columns");
      }
      if (is_onet_code(trim(header[0]))) throw ParseError(source, line_no, "missing header row");
      continue;
    }
    auto fields = split_fields(line, delim, source, line_no);
    for (auto& f : fields) f = trim(std::move(f));
    if (fields.size() < min_columns) {
      throw ParseError(source, line_no,
                       "expected " + std::to_string(min_columns) + " columns, got " + std::to_string(fields.size()));
    }
    rows.push_back({line_no, std::move(fields)});
  }
  if (delim == 0) throw ParseError(source, line_no, "missing header row");
  return rows;
}

}  // namespace

OccupationTaxonomy parse_taxonomy(std::istream& occupations, std::istream& related,
                                  const std::string& occupations_name, const std::string& related_name) {
  std::vector<OccupationEntry> entries;
  std::map<std::string, std::string> aliases;
  std::set<std::string> codes;
  for (auto& row : read_rows(occupations, occupations_name, 2)) {
    const auto& code = row.fields[0];
    if (!is_onet_code(code)) throw ParseError(occupations_name, row.line, "bad occupation code '" + code + "'");
    if (row.fields[1].empty()) throw ParseError(occupations_name, row.line, "empty title for " + code);
    if (!codes.insert(code).second) throw ParseError(occupations_name, row.line, "duplicate code " + code);
    if (row.fields.size() > 2) {
      std::stringstream ss(row.fields[2]);
      std::string alias;
      while (std::getline(ss, alias, '|')) {
        alias = trim(alias);
        if (!alias.empty()) aliases[alias] = code;
      }
    }
    entries.push_back({code, row.fields[1]});
  }

  std::map<std::string, std::vector<std::pair<long, std::string>>> by_target;
  std::map<std::string, std::size_t> first_line;
  for (auto& row : read_rows(related, related_name, 3)) {
    const auto& target = row.fields[0];
    const auto& member = row.fields[1];
    if (!codes.count(target)) throw DanglingCode(target, row.line);
    if (!codes.count(member)) throw DanglingCode(member, row.line);
    if (member == target) throw ParseError(related_name, row.line, "rank 1 is implicit; " + target + " lists itself");
    long rank = 0;
    const auto& rs = row.fields[2];
    auto [p, ec] = std::from_chars(rs.data(), rs.data() + rs.size(), rank);
    if (ec != std::errc{} || p != rs.data() + rs.size() || rank < 2) {
      throw ParseError(related_name, row.line, "rank must be an integer >= 2, got '" + rs + "'");
    }
    by_target[target].emplace_back(rank, member);
    first_line.emplace(target, row.line);
  }

  std::map<std::string, std::vector<std::string>> ranked;
  for (auto& [target, members] : by_target) {
    std::sort(members.begin(), members.end());
    std::set<std::string> seen;
    for (std::size_t i = 0; i < members.size(); ++i) {
      if (members[i].first != static_cast<long>(i) + 2) {
        throw ParseError(related_name, first_line[target], "ranks for " + target + " are not contiguous from 2");
      }
      if (!seen.insert(members[i].second).second) {
        throw ParseError(related_name, first_line[target], "duplicate related code " + members[i].second);
      }
      ranked[target].push_back(members[i].second);
    }
  }
  return OccupationTaxonomy(std::move(entries), ranked, aliases);
}

OccupationTaxonomy load_taxonomy(const std::filesystem::path& occupations_file,
                                 const std::filesystem::path& related_file) {
  std::ifstream occ(occupations_file);
  if (!occ) throw IoError("cannot open " + occupations_file.string());
  std::ifstream rel(related_file);
  if (!rel) throw IoError("cannot open " + related_file.string());
  return parse_taxonomy(occ, rel, occupations_file.string(), related_file.string());
}

std::string format_occupations_tsv(const OccupationTaxonomy& taxonomy) {
  std::map<std::string, std::vector<std::string>> aliases_by_code;
  for (const auto& [alias, code] : taxonomy.aliases()) aliases_by_code[code].push_back(alias);
  const bool with_aliases = !aliases_by_code.empty();
  std::string out = with_aliases ? "code\ttitle\taliases\n" : "code\ttitle\n";
  for (const auto& e : taxonomy.entries()) {
    out += e.code + "\t" + e.title;
    if (with_aliases) {
      out += "\t";
      const auto& list = aliases_by_code[e.code];
      for (std::size_t i = 0; i < list.size(); ++i) out += (i ? "|" : "") + list[i];
    }
    out += "\n";
  }
  return out;
}

std::string format_related_tsv(const OccupationTaxonomy& taxonomy) {
  std::string out = "target_code\trelated_code\trank\n";
  for (const auto& e : taxonomy.entries()) {
    const auto& ranked = taxonomy.related(e.code).ranked;
    for (std::size_t k = 1; k < ranked.size(); ++k) {
      out += e.code + "\t" + ranked[k] + "\t" + std::to_string(k + 1) + "\n";
    }
  }
  return out;
}

void save_taxonomy(const OccupationTaxonomy& taxonomy, const std::filesystem::path& occupations_file,
                   const std::filesystem::path& related_file) {
  write_file_atomic(occupations_file, format_occupations_tsv(taxonomy));
  write_file_atomic(related_file, format_related_tsv(taxonomy));
}

// ---------------------------------------------------------------------------
// Fixture

namespace {

struct Family {
  std::vector<OccupationEntry> members;
};

const std::vector<Family>& fixture_families() {
  static const std::vector<Family> families = {
      {{{"15-1252.00", "Software Developers"},
        {"15-1253.00", "Software Quality Assurance Analysts and Testers"},
        {"15-1211.00", "Computer Systems Analysts"},
        {"15-1244.00", "Network and Computer Systems Administrators"},
        {"15-1232.00", "Computer User Support Specialists"},
        {"15-2051.00", "Data Scientists"},
        {"11-3021.00", "Computer and Information Systems Managers"}}},
      {{{"13-2011.00", "Accountants and Auditors"},
        {"13-2051.00", "Financial and Investment Analysts"},
        {"43-3031.00", "Bookkeeping, Accounting, and Auditing Clerks"},
        {"11-3031.00", "Financial Managers"},
        {"13-2072.00", "Loan Officers"},
        {"13-1041.00", "Compliance Officers"}}},
      {{{"11-1021.00", "General and Operations Managers"},
        {"11-1011.00", "Chief Executives"},
        {"13-1111.00", "Management Analysts"},
        {"13-1071.00", "Human Resources Specialists"},
        {"11-3121.00", "Human Resources Managers"},
        {"13-1082.00", "Project Management Specialists"}}},
      {{{"41-3091.00", "Sales Representatives of Services"},
        {"41-4012.00", "Sales Representatives, Wholesale and Manufacturing"},
        {"11-2022.00", "Sales Managers"},
        {"11-2021.00", "Marketing Managers"},
        {"13-1161.00", "Market Research Analysts and Marketing Specialists"},
        {"41-2031.00", "Retail Salespersons"},
        {"41-1011.00", "First-Line Supervisors of Retail Sales Workers"}}},
      {{{"29-1141.00", "Registered Nurses"},
        {"29-1171.00", "Nurse Practitioners"},
        {"11-9111.00", "Medical and Health Services Managers"},
        {"29-2061.00", "Licensed Practical and Licensed Vocational Nurses"},
        {"31-9092.00", "Medical Assistants"},
        {"29-1051.00", "Pharmacists"}}},
      {{{"17-2141.00", "Mechanical Engineers"},
        {"17-2112.00", "Industrial Engineers"},
        {"17-2071.00", "Electrical Engineers"},
        {"11-9041.00", "Architectural and Engineering Managers"},
        {"17-3026.00", "Industrial Engineering Technologists and Technicians"},
        {"17-2051.00", "Civil Engineers"}}},
      {{{"43-6014.00", "Secretaries and Administrative Assistants"},
        {"43-4051.00", "Customer Service Representatives"},
        {"43-1011.00", "First-Line Supervisors of Office and Administrative Support Workers"},
        {"43-9061.00", "Office Clerks, General"},
        {"43-6011.00", "Executive Secretaries and Executive Administrative Assistants"}}},
      {{{"25-2021.00", "Elementary School Teachers"},
        {"25-2031.00", "Secondary School Teachers"},
        {"11-9032.00", "Education Administrators, Kindergarten through Secondary"},
        {"21-1012.00", "Educational, Guidance, and Career Counselors and Advisors"},
        {"25-9042.00", "Teaching Assistants"},
        {"25-3021.00", "Self-Enrichment Teachers"}}},
  };
  return families;
}

}  // namespace

OccupationTaxonomy fixture_taxonomy() {
  const auto& families = fixture_families();
  std::vector<OccupationEntry> entries;
  std::map<std::string, std::vector<std::string>> related;
  for (std::size_t f = 0; f < families.size(); ++f) {
    const auto& m = families[f].members;
    for (std::size_t i = 0; i < m.size(); ++i) {
      entries.push_back(m[i]);
      auto& list = related[m[i].code];
      // Up to four family members in circular order, then one bridge into
      // the next family.
      for (std::size_t k = 1; k < m.size() && k <= 4; ++k) list.push_back(m[(i + k) % m.size()].code);
      const auto& next = families[(f + 1) % families.size()].members;
      list.push_back(next[i % next.size()].code);
    }
  }
  std::map<std::string, std::string> aliases = {
      {"Software Engineers", "15-1252.00"},
      {"RN", "29-1141.00"},
      {"Accountants", "13-2011.00"},
  };
  return OccupationTaxonomy(std::move(entries), related, aliases);
}

}  // namespace occupred
