#pragma once

#include <pairbounds/typespace.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace pairbounds {

// Row of the 64-entry observed distribution: 16 cells per offer block,
// within-block index 8y + 4y' + 2d + d'.
struct CellIndex {
  int block = 0;
  int within = 0;

  constexpr int row() const { return 16 * block + within; }
  static constexpr int within_of(int y, int y_other, int d, int d_other) { return 8 * y + 4 * y_other + 2 * d + d_other; }
  static constexpr CellIndex from_row(int row) { return {row / 16, row % 16}; }
  constexpr int y() const { return (within >> 3) & 1; }
  constexpr int y_other() const { return (within >> 2) & 1; }
  constexpr int d() const { return (within >> 1) & 1; }
  constexpr int d_other() const { return within & 1; }
  friend constexpr bool operator==(CellIndex, CellIndex) = default;
};

inline constexpr int kCellCount = 64;

struct HouseholdRecord {
  std::string household_id;
  int y1 = 0, d1 = 0, z1 = 0;
  int y2 = 0, d2 = 0, z2 = 0;

  int block() const { return 2 * z1 + z2; }
  int within() const { return CellIndex::within_of(y1, y2, d1, d2); }
  friend bool operator==(const HouseholdRecord&, const HouseholdRecord&) = default;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class DuplicateHousehold : public ParseError {
 public:
  using ParseError::ParseError;
};

class AllBlocksEmpty : public std::invalid_argument {
 public:
  AllBlocksEmpty() : std::invalid_argument("no household records: every offer block is empty") {}
};

enum class CsvLayout { wide, long_format };

// Wide: household_id,y1,d1,z1,y2,d2,z2. Long: household_id,role,y,d,z with
// role values mapped to members by member1_role / member2_role.
struct CsvSchema {
  CsvLayout layout = CsvLayout::wide;
  std::string role_column = "role";
  std::string member1_role = "1";
  std::string member2_role = "2";
};

namespace detail {

inline std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') quoted = !quoted;
    else if (ch == ',' && !quoted) {
      out.push_back(trim(cur));
      cur.clear();
    } else cur += ch;
  }
  out.push_back(trim(cur));
  return out;
}

inline int parse_binary(const std::string& field, const std::string& column, std::size_t line) {
  if (field == "0") return 0;
  if (field == "1") return 1;
  throw ParseError(line, "column '" + column + "' must be 0 or 1, got '" + field + "'");
}

class CsvReader {
 public:
  explicit CsvReader(std::istream& in) : in_(in) {
    std::string header;
    if (!next(header)) throw ParseError(1, "missing header row");
    header_line_ = line_;
    auto names = split_csv_line(header);
    if (!names.empty() && names[0].rfind("\xEF\xBB\xBF", 0) == 0) names[0] = names[0].substr(3);
    for (std::size_t i = 0; i < names.size(); ++i) index_[names[i]] = i;
  }

  std::size_t column(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ParseError(header_line_, "missing column '" + name + "'");
    return it->second;
  }

  // Next nonblank data row; false at end of input.
  bool row(std::vector<std::string>& fields) {
    std::string line;
    if (!next(line)) return false;
    fields = split_csv_line(line);
    if (fields.size() != index_.size())
      throw ParseError(line_, "expected " + std::to_string(index_.size()) + " fields, got " + std::to_string(fields.size()));
    return true;
  }
  std::size_t line() const { return line_; }

 private:
  bool next(std::string& out) {
    while (std::getline(in_, out)) {
      ++line_;
      if (!out.empty() && out.back() == '\r') out.pop_back();
      if (!trim(out).empty()) return true;
    }
    return false;
  }

  std::istream& in_;
  std::size_t line_ = 0;
  std::size_t header_line_ = 1;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace detail

inline std::vector<HouseholdRecord> ingest(std::istream& in, const CsvSchema& schema = {}) {
  detail::CsvReader reader(in);
  std::vector<HouseholdRecord> out;
  std::vector<std::string> f;

  if (schema.layout == CsvLayout::wide) {
    const std::size_t id = reader.column("household_id");
    const std::array<std::string, 6> names = {"y1", "d1", "z1", "y2", "d2", "z2"};
    std::array<std::size_t, 6> col{};
    for (int i = 0; i < 6; ++i) col[i] = reader.column(names[i]);
    std::unordered_set<std::string> seen;
    while (reader.row(f)) {
      HouseholdRecord r;
      r.household_id = f[id];
      if (r.household_id.empty()) throw ParseError(reader.line(), "empty household_id");
      std::array<int, 6> v{};
      for (int i = 0; i < 6; ++i) v[i] = detail::parse_binary(f[col[i]], names[i], reader.line());
      r.y1 = v[0], r.d1 = v[1], r.z1 = v[2], r.y2 = v[3], r.d2 = v[4], r.z2 = v[5];
      if (!seen.insert(r.household_id).second)
        throw DuplicateHousehold(reader.line(), "household '" + r.household_id + "' appears more than once");
      out.push_back(std::move(r));
    }
    return out;
  }

  const std::size_t id = reader.column("household_id");
  const std::size_t role = reader.column(schema.role_column);
  const std::size_t cy = reader.column("y"), cd = reader.column("d"), cz = reader.column("z");
  struct Partial {
    HouseholdRecord rec;
    bool has[2] = {false, false};
    std::size_t first_line = 0;
  };
  std::vector<Partial> parts;
  std::unordered_map<std::string, std::size_t> where;
  while (reader.row(f)) {
    int member = 0;
    if (f[role] == schema.member1_role) member = 1;
    else if (f[role] == schema.member2_role) member = 2;
    else throw ParseError(reader.line(), "unknown role '" + f[role] + "'");
    if (f[id].empty()) throw ParseError(reader.line(), "empty household_id");
    auto [it, fresh] = where.emplace(f[id], parts.size());
    if (fresh) {
      parts.push_back({});
      parts.back().rec.household_id = f[id];
      parts.back().first_line = reader.line();
    }
    Partial& p = parts[it->second];
    if (p.has[member - 1])
      throw DuplicateHousehold(reader.line(), "household '" + f[id] + "' lists role '" + f[role] + "' twice");
    p.has[member - 1] = true;
    int y = detail::parse_binary(f[cy], "y", reader.line());
    int d = detail::parse_binary(f[cd], "d", reader.line());
    int z = detail::parse_binary(f[cz], "z", reader.line());
    if (member == 1) p.rec.y1 = y, p.rec.d1 = d, p.rec.z1 = z;
    else p.rec.y2 = y, p.rec.d2 = d, p.rec.z2 = z;
  }
  for (Partial& p : parts) {
    if (!p.has[0] || !p.has[1])
      throw ParseError(p.first_line, "household '" + p.rec.household_id + "' lacks a member " +
                                         std::string(p.has[0] ? "2" : "1") + " row");
    out.push_back(std::move(p.rec));
  }
  return out;
}

inline std::vector<HouseholdRecord> ingest(const std::string& path, const CsvSchema& schema = {}) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open data file '" + path + "'");
  return ingest(in, schema);
}

inline void write_csv(const std::vector<HouseholdRecord>& records, std::ostream& out, CsvLayout layout = CsvLayout::wide) {
  if (layout == CsvLayout::wide) {
    out << "household_id,y1,d1,z1,y2,d2,z2\n";
    for (const auto& r : records)
      out << r.household_id << ',' << r.y1 << ',' << r.d1 << ',' << r.z1 << ',' << r.y2 << ',' << r.d2 << ',' << r.z2 << '\n';
    return;
  }
  out << "household_id,role,y,d,z\n";
  for (const auto& r : records) {
    out << r.household_id << ",1," << r.y1 << ',' << r.d1 << ',' << r.z1 << '\n';
    out << r.household_id << ",2," << r.y2 << ',' << r.d2 << ',' << r.z2 << '\n';
  }
}

// Conditional cell probabilities p(y,y',d,d' | z,z') with per-block counts.
// Population distributions carry zero counts and an explicit active set.
struct ObservedDistribution {
  std::array<double, kCellCount> cells{};
  std::array<std::uint64_t, kProfileCount> n_z{};
  ProfileMask active_blocks;

  double cell(int block, int within) const { return cells[std::size_t(16 * block + within)]; }
  std::uint64_t households() const { return n_z[0] + n_z[1] + n_z[2] + n_z[3]; }

  // Checks nonnegativity and per-block normalization of active blocks.
  void validate(double tol = 1e-9) const {
    if (active_blocks.empty()) throw std::invalid_argument("observed distribution has no active block");
    for (int z = 0; z < kProfileCount; ++z) {
      double sum = 0;
      for (int w = 0; w < 16; ++w) {
        double v = cell(z, w);
        if (!(v >= -tol) || !std::isfinite(v)) throw std::invalid_argument("cell probabilities must be finite and nonnegative");
        sum += v;
      }
      if (active_blocks.contains(z) && std::abs(sum - 1.0) > tol)
        throw std::invalid_argument("block " + std::to_string(z) + " does not sum to one");
      if (!active_blocks.contains(z) && sum != 0.0)
        throw std::invalid_argument("inactive block " + std::to_string(z) + " must be zero");
    }
  }

  static ObservedDistribution from_counts(const std::array<std::uint64_t, kCellCount>& counts) {
    ObservedDistribution o;
    for (int r = 0; r < kCellCount; ++r) o.n_z[std::size_t(r / 16)] += counts[std::size_t(r)];
    std::uint8_t mask = 0;
    for (int z = 0; z < kProfileCount; ++z) {
      if (o.n_z[std::size_t(z)] == 0) continue;
      mask |= std::uint8_t(1u << z);
      for (int w = 0; w < 16; ++w)
        o.cells[std::size_t(16 * z + w)] = double(counts[std::size_t(16 * z + w)]) / double(o.n_z[std::size_t(z)]);
    }
    o.active_blocks = ProfileMask(mask);
    return o;
  }
};

inline std::array<std::uint64_t, kCellCount> cell_counts(const std::vector<HouseholdRecord>& records) {
  std::array<std::uint64_t, kCellCount> counts{};
  for (const auto& r : records) ++counts[std::size_t(16 * r.block() + r.within())];
  return counts;
}

// Each household counted once, member 1 as fixed by the role mapping.
inline ObservedDistribution empirical_cells(const std::vector<HouseholdRecord>& records) {
  if (records.empty()) throw AllBlocksEmpty();
  return ObservedDistribution::from_counts(cell_counts(records));
}

}  // namespace pairbounds
