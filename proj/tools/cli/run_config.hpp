#pragma once

#include <pairbounds/data.hpp>
#include <pairbounds/inference.hpp>
#include <pairbounds/program.hpp>
#include <pairbounds/restrictions.hpp>
#include <pairbounds/simulate.hpp>
#include <pairbounds/verify.hpp>

#include <toml.hpp>

#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace pairbounds::cli {

// Bad flags or config contents; maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Values given on the command line; unset members were not passed.
struct FlagValues {
  std::optional<std::string> data;
  std::optional<std::string> config;
  std::optional<std::string> estimand;
  std::optional<int> member;
  std::vector<std::string> restrictions;
  std::optional<double> alpha;
  std::optional<int> reps;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<std::string> out;

  std::optional<std::string> method;
  std::optional<std::string> class_filter;
  std::optional<std::string> profiles;
  std::optional<std::string> population;
  std::optional<std::string> layout;
  std::optional<std::string> preset;
  std::optional<long long> n;
  std::optional<std::string> csv;
  std::vector<std::string> checks;
  std::optional<std::string> scale;
  std::optional<int> trials;
};

struct RunConfig {
  Estimand estimand = ade(1);
  std::string estimand_label = "ade";
  std::vector<Restriction> restrictions;
  ClassFilter class_filter = ClassFilter::none;
  std::optional<ProfileMask> profiles;
  InferenceConfig inference;

  std::optional<std::string> data_path;
  CsvSchema schema;
  std::optional<std::string> population;
  std::uint64_t seed = 1;
  unsigned threads = 0;
  std::optional<std::string> out;

  std::optional<std::string> preset;
  std::optional<StructuralDgp> dgp;  // from [simulate.dgp]
  long long n = 0;
  std::optional<std::string> csv;
  CsvLayout csv_layout = CsvLayout::wide;

  std::vector<std::string> checks;
  CheckScale scale = CheckScale::reduced;
  std::optional<int> trials;

  std::vector<std::string> warnings;
};

inline const std::vector<std::string>& check_names() {
  static const std::vector<std::string> names{"counterexample", "dominance", "symmetry",
                                              "sandwich",       "closure",   "emptiness"};
  return names;
}

namespace detail {

inline std::optional<ClassFilter> parse_class_filter(const std::string& s) {
  for (ClassFilter f : {ClassFilter::none, ClassFilter::dominant_only, ClassFilter::symmetric_only,
                        ClassFilter::supermodular_only, ClassFilter::submodular_only})
    if (to_string(f) == s) return f;
  return std::nullopt;
}

inline int parse_profile(const std::string& s) {
  if (s.size() != 2 || (s[0] != '0' && s[0] != '1') || (s[1] != '0' && s[1] != '1'))
    throw ConfigError("offer profile '" + s + "' must be two binary digits, e.g. 01");
  return 2 * (s[0] - '0') + (s[1] - '0');
}

inline ProfileMask parse_profiles(const std::string& text) {
  ProfileMask m;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) m = m.with(parse_profile(pairbounds::detail::trim(item)));
  if (m.empty()) throw ConfigError("at least one offer profile is required");
  return m;
}

inline TakeUp parse_takeup(const std::string& s) {
  if (s.size() != 2 || (s[0] != '0' && s[0] != '1') || (s[1] != '0' && s[1] != '1'))
    throw ConfigError("allocation '" + s + "' must be two binary digits (own, partner)");
  return {s[0] - '0', s[1] - '0'};
}

// "F@zz": forced treatment F at offers zz (own, partner).
inline PolicyArm parse_arm(const std::string& s) {
  if (s.size() != 4 || s[1] != '@' || (s[0] != '0' && s[0] != '1'))
    throw ConfigError("policy arm '" + s + "' must look like 1@00");
  int p = parse_profile(s.substr(2));
  return {s[0] - '0', p >> 1, p & 1};
}

}  // namespace detail

// Estimand flag grammar: ade | ase | theta:AB[-CD] | gamma:F@zz[-F@zz].
inline Estimand parse_estimand(const std::string& text, int member) {
  if (text == "ade") return ade(member);
  if (text == "ase") return ase(member);
  auto colon = text.find(':');
  std::string head = text.substr(0, colon);
  if (colon == std::string::npos) throw ConfigError("unknown estimand '" + text + "'");
  std::string body = text.substr(colon + 1);
  auto dash = body.find('-');
  std::string first = body.substr(0, dash);
  std::optional<std::string> second;
  if (dash != std::string::npos) second = body.substr(dash + 1);
  if (head == "theta") {
    FixedAllocation fa{member, detail::parse_takeup(first), std::nullopt};
    if (second) fa.alloc2 = detail::parse_takeup(*second);
    return fa;
  }
  if (head == "gamma") {
    PolicyTarget pt{member, detail::parse_arm(first), std::nullopt};
    if (second) pt.contrast = detail::parse_arm(*second);
    return pt;
  }
  throw ConfigError("unknown estimand '" + text + "'");
}

namespace detail {

// Minimal schema walker over a TOML table: unknown keys and missing
// required keys become ConfigErrors naming the dotted path.
class TableReader {
 public:
  TableReader(const toml::table& table, std::string path, std::vector<std::string> allowed)
      : table_(table), path_(std::move(path)) {
    for (auto&& [key, node] : table_) {
      (void)node;
      std::string k(key.str());
      if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
        throw ConfigError(where(k) + ": unknown field");
    }
  }

  bool has(const std::string& key) const { return table_.contains(key); }

  template <class T>
  std::optional<T> get(const std::string& key) const {
    const toml::node* node = table_.get(key);
    if (!node) return std::nullopt;
    if constexpr (std::is_same_v<T, double>) {
      if (auto v = node->value<double>()) return *v;
    } else if constexpr (std::is_integral_v<T>) {
      if (auto v = node->value<std::int64_t>()) return T(*v);
    } else {
      if (auto v = node->value<T>()) return *v;
    }
    throw ConfigError(where(key) + ": wrong type");
  }

  template <class T>
  T require(const std::string& key) const {
    if (!has(key)) throw ConfigError(where(key) + ": missing required field");
    return *get<T>(key);
  }

  const toml::table* table(const std::string& key) const {
    const toml::node* node = table_.get(key);
    if (!node) return nullptr;
    if (!node->is_table()) throw ConfigError(where(key) + ": expected a table");
    return node->as_table();
  }

  const toml::array* array(const std::string& key) const {
    const toml::node* node = table_.get(key);
    if (!node) return nullptr;
    if (!node->is_array()) throw ConfigError(where(key) + ": expected an array");
    return node->as_array();
  }

  std::vector<int> int_list(const std::string& key) const {
    std::vector<int> out;
    if (const toml::array* a = array(key))
      for (const toml::node& v : *a) {
        auto x = v.value<std::int64_t>();
        if (!x) throw ConfigError(where(key) + ": expected integers");
        out.push_back(int(*x));
      }
    return out;
  }

  std::vector<std::string> string_list(const std::string& key) const {
    std::vector<std::string> out;
    if (const toml::array* a = array(key))
      for (const toml::node& v : *a) {
        auto x = v.value<std::string>();
        if (!x) throw ConfigError(where(key) + ": expected strings");
        out.push_back(*x);
      }
    return out;
  }

  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  const toml::table& table_;
  std::string path_;
};

inline TakeUp pair_of(const TableReader& r, const std::string& key) {
  auto v = r.int_list(key);
  if (v.size() != 2) throw ConfigError(r.where(key) + ": expected two entries");
  return {v[0], v[1]};
}

inline PolicyArm arm_of(const TableReader& r) {
  PolicyArm a;
  a.forced = r.require<int>("forced");
  if (!r.has("offers")) throw ConfigError(r.where("offers") + ": missing required field");
  TakeUp offers = pair_of(r, "offers");
  a.own_offer = offers.d;
  a.partner_offer = offers.d_other;
  return a;
}

inline Estimand estimand_of(const toml::table& t, std::string& label) {
  TableReader r(t, "estimand", {"kind", "member", "alloc", "baseline", "forced", "offers", "contrast"});
  label = r.require<std::string>("kind");
  const int member = r.get<int>("member").value_or(1);
  if (label == "ade") return ade(member);
  if (label == "ase") return ase(member);
  if (label == "theta") {
    if (!r.has("alloc")) throw ConfigError("estimand.alloc: missing required field");
    FixedAllocation fa{member, pair_of(r, "alloc"), std::nullopt};
    if (r.has("baseline")) fa.alloc2 = pair_of(r, "baseline");
    return fa;
  }
  if (label == "gamma") {
    PolicyTarget pt{member, {}, std::nullopt};
    TableReader arm(t, "estimand", {"kind", "member", "forced", "offers", "contrast"});
    pt.arm = arm_of(arm);
    if (const toml::table* c = r.table("contrast")) pt.contrast = arm_of(TableReader(*c, "estimand.contrast", {"forced", "offers"}));
    return pt;
  }
  throw ConfigError("estimand.kind: unknown kind '" + label + "' (ade, ase, theta, gamma)");
}

inline Restriction restriction_of(const toml::table& t, const std::string& path) {
  TableReader r(t, path, {"kind", "eps", "scope"});
  std::string name = r.require<std::string>("kind");
  auto kind = parse_kind(name);
  if (!kind) throw ConfigError(r.where("kind") + ": unknown restriction '" + name + "'");
  Restriction out{*kind, Scope::both, 0.0};
  if (is_eps_kind(*kind)) out.eps = r.require<double>("eps");
  else if (r.has("eps")) throw ConfigError(r.where("eps") + ": '" + name + "' takes no eps");
  if (auto s = r.get<std::string>("scope")) {
    auto scope = parse_scope(*s);
    if (!scope) throw ConfigError(r.where("scope") + ": expected member1, member2 or both");
    out.scope = *scope;
  }
  try {
    validate(out);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(r.where("eps") + ": " + e.what());
  }
  return out;
}

inline MemberEquations member_of(const toml::table& t, const std::string& path) {
  TableReader r(t, path, {"takeup", "outcome", "scale"});
  MemberEquations m;
  m.scale = r.get<double>("scale").value_or(1.0);
  const toml::table* tu = r.table("takeup");
  if (!tu) throw ConfigError(r.where("takeup") + ": missing required field");
  TableReader rt(*tu, path + ".takeup", {"unoffered", "offered", "partner_offer", "partner_takeup"});
  // A missing unoffered index means nobody takes up without an own offer.
  m.takeup.unoffered = rt.get<double>("unoffered").value_or(-std::numeric_limits<double>::infinity());
  m.takeup.offered = rt.require<double>("offered");
  m.takeup.partner_offer = rt.get<double>("partner_offer").value_or(0.0);
  m.takeup.partner_takeup = rt.get<double>("partner_takeup").value_or(0.0);
  const toml::table* oc = r.table("outcome");
  if (!oc) throw ConfigError(r.where("outcome") + ": missing required field");
  TableReader ro(*oc, path + ".outcome", {"baseline", "own_effect", "spillover"});
  m.outcome.baseline = ro.require<double>("baseline");
  m.outcome.own_effect = ro.get<double>("own_effect").value_or(0.0);
  m.outcome.spillover = ro.get<double>("spillover").value_or(0.0);
  return m;
}

inline StructuralDgp dgp_of(const toml::table& t) {
  TableReader r(t, "simulate.dgp", {"member1", "member2", "rho", "offer_probs", "selection", "selection_seed"});
  StructuralDgp dgp;
  for (int m = 0; m < 2; ++m) {
    std::string key = m == 0 ? "member1" : "member2";
    const toml::table* mt = r.table(key);
    if (!mt) throw ConfigError(r.where(key) + ": missing required field");
    dgp.members[std::size_t(m)] = member_of(*mt, r.where(key));
  }
  dgp.rho = r.get<double>("rho").value_or(0.0);
  if (const toml::array* a = r.array("offer_probs")) {
    if (a->size() != 4) throw ConfigError("simulate.dgp.offer_probs: expected four entries (00, 01, 10, 11)");
    for (std::size_t i = 0; i < 4; ++i) {
      auto v = (*a)[i].value<double>();
      if (!v) throw ConfigError("simulate.dgp.offer_probs: expected numbers");
      dgp.offer_probs[i] = *v;
    }
  }
  if (auto s = r.get<std::string>("selection")) {
    if (*s == "lowest") dgp.selection = SelectionRule::lowest;
    else if (*s == "highest") dgp.selection = SelectionRule::highest;
    else if (*s == "seeded_random") dgp.selection = SelectionRule::seeded_random;
    else throw ConfigError("simulate.dgp.selection: expected lowest, highest or seeded_random");
  }
  dgp.selection_seed = r.get<std::uint64_t>("selection_seed").value_or(0);
  try {
    validate(dgp);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("simulate.dgp: ") + e.what());
  }
  return dgp;
}

// Values read from the config file, before merging with flags.
struct FileValues {
  std::optional<Estimand> estimand;
  std::string estimand_label;
  std::optional<std::vector<Restriction>> restrictions;
  std::optional<std::string> class_filter, profiles_text, method, kappa_rule, data, layout, role_column, member1_role,
      member2_role, population, out, preset, csv, scale;
  std::optional<ProfileMask> profiles;
  std::optional<double> alpha, step_exponent, tolerance_exponent;
  std::optional<int> reps, trials;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<long long> n;
  std::optional<StructuralDgp> dgp;
  std::optional<std::vector<std::string>> checks;
};

inline FileValues read_config_file(const std::string& path) {
  toml::table root;
  try {
    root = toml::parse_file(path);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << path << ":" << e.source().begin.line << ": " << e.description();
    throw ConfigError(msg.str());
  }
  FileValues f;
  TableReader top(root, "", {"estimand", "restrictions", "type_space", "inference", "data", "run", "simulate", "verify"});
  if (const toml::table* t = top.table("estimand")) f.estimand = estimand_of(*t, f.estimand_label);
  if (const toml::array* a = top.array("restrictions")) {
    f.restrictions.emplace();
    for (std::size_t i = 0; i < a->size(); ++i) {
      const toml::table* t = (*a)[i].as_table();
      std::string path = "restrictions[" + std::to_string(i) + "]";
      if (!t) throw ConfigError(path + ": expected a table");
      f.restrictions->push_back(restriction_of(*t, path));
    }
  }
  if (const toml::table* t = top.table("type_space")) {
    TableReader r(*t, "type_space", {"class_filter", "profiles"});
    f.class_filter = r.get<std::string>("class_filter");
    if (r.has("profiles")) {
      ProfileMask m;
      for (const std::string& s : r.string_list("profiles")) m = m.with(parse_profile(s));
      if (m.empty()) throw ConfigError("type_space.profiles: at least one offer profile is required");
      f.profiles = m;
    }
  }
  if (const toml::table* t = top.table("inference")) {
    TableReader r(*t, "inference", {"method", "alpha", "reps", "kappa_rule", "step_exponent", "tolerance_exponent"});
    f.method = r.get<std::string>("method");
    f.alpha = r.get<double>("alpha");
    f.reps = r.get<int>("reps");
    f.kappa_rule = r.get<std::string>("kappa_rule");
    f.step_exponent = r.get<double>("step_exponent");
    f.tolerance_exponent = r.get<double>("tolerance_exponent");
  }
  if (const toml::table* t = top.table("data")) {
    TableReader r(*t, "data", {"path", "layout", "role_column", "member1_role", "member2_role", "population"});
    if (!r.has("path") && !r.has("population")) throw ConfigError("data.path: missing required field");
    f.data = r.get<std::string>("path");
    f.population = r.get<std::string>("population");
    f.layout = r.get<std::string>("layout");
    f.role_column = r.get<std::string>("role_column");
    f.member1_role = r.get<std::string>("member1_role");
    f.member2_role = r.get<std::string>("member2_role");
  }
  if (const toml::table* t = top.table("run")) {
    TableReader r(*t, "run", {"seed", "threads", "out"});
    f.seed = r.get<std::uint64_t>("seed");
    f.threads = r.get<unsigned>("threads");
    f.out = r.get<std::string>("out");
  }
  if (const toml::table* t = top.table("simulate")) {
    TableReader r(*t, "simulate", {"preset", "dgp", "n", "csv"});
    f.preset = r.get<std::string>("preset");
    if (const toml::table* d = r.table("dgp")) f.dgp = dgp_of(*d);
    if (f.preset && f.dgp) throw ConfigError("simulate: give either preset or dgp, not both");
    f.n = r.get<long long>("n");
    f.csv = r.get<std::string>("csv");
  }
  if (const toml::table* t = top.table("verify")) {
    TableReader r(*t, "verify", {"checks", "scale", "trials"});
    if (r.has("checks")) f.checks = r.string_list("checks");
    f.scale = r.get<std::string>("scale");
    f.trials = r.get<int>("trials");
  }
  return f;
}

// Config value wins over a differing flag, with a warning.
template <class T>
std::optional<T> merge(const char* name, const std::optional<T>& flag, const std::optional<T>& file,
                       std::vector<std::string>& warnings) {
  if (file) {
    if (flag && !(*flag == *file)) warnings.push_back(std::string("config file overrides --") + name);
    return file;
  }
  return flag;
}

}  // namespace detail

inline RunConfig resolve(const FlagValues& flags) {
  RunConfig rc;
  detail::FileValues file;
  if (flags.config) file = detail::read_config_file(*flags.config);
  auto& w = rc.warnings;

  // Estimand: config table, else --estimand/--member.
  if (file.estimand) {
    if (flags.estimand || flags.member) w.push_back("config file overrides --estimand/--member");
    rc.estimand = *file.estimand;
    rc.estimand_label = file.estimand_label;
  } else {
    const int member = flags.member.value_or(1);
    if (member != 1 && member != 2) throw ConfigError("--member must be 1 or 2");
    rc.estimand_label = flags.estimand.value_or("ade");
    rc.estimand = parse_estimand(rc.estimand_label, member);
  }
  try {
    validate(rc.estimand);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("estimand: ") + e.what());
  }

  std::vector<Restriction> flag_restrictions;
  for (const std::string& text : flags.restrictions) {
    try {
      flag_restrictions.push_back(parse_restriction(text));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("--restriction: ") + e.what());
    }
  }
  if (file.restrictions) {
    if (!flags.restrictions.empty()) w.push_back("config file overrides --restriction");
    rc.restrictions = *file.restrictions;
  } else {
    rc.restrictions = flag_restrictions;
  }

  if (auto cf = detail::merge("class-filter", flags.class_filter, file.class_filter, w)) {
    auto parsed = detail::parse_class_filter(*cf);
    if (!parsed) throw ConfigError("class filter '" + *cf + "' is not one of none, dominant_only, symmetric_only, "
                                   "supermodular_only, submodular_only");
    rc.class_filter = *parsed;
  }
  std::optional<ProfileMask> flag_profiles;
  if (flags.profiles) flag_profiles = detail::parse_profiles(*flags.profiles);
  rc.profiles = detail::merge("profiles", flag_profiles, file.profiles, w);

  if (auto m = detail::merge("method", flags.method, file.method, w)) {
    auto parsed = parse_ci_method(*m);
    if (!parsed) throw ConfigError("inference method '" + *m + "' is not one of relaxed_box, basis_bootstrap, numerical_delta");
    rc.inference.method = *parsed;
  }
  if (file.kappa_rule) {
    if (*file.kappa_rule == "analytic") rc.inference.kappa_rule = KappaRule::analytic;
    else if (*file.kappa_rule == "bootstrap") rc.inference.kappa_rule = KappaRule::bootstrap;
    else throw ConfigError("inference.kappa_rule: expected analytic or bootstrap");
  }
  if (auto a = detail::merge("alpha", flags.alpha, file.alpha, w)) rc.inference.alpha = *a;
  if (auto r = detail::merge("reps", flags.reps, file.reps, w)) rc.inference.reps = *r;
  if (file.step_exponent) rc.inference.step_exponent = *file.step_exponent;
  if (file.tolerance_exponent) rc.inference.tolerance_exponent = *file.tolerance_exponent;

  rc.data_path = detail::merge("data", flags.data, file.data, w);
  rc.population = detail::merge("population", flags.population, file.population, w);
  if (rc.data_path && rc.population) throw ConfigError("give either a data file or a population preset, not both");
  if (auto l = detail::merge("layout", flags.layout, file.layout, w)) {
    if (*l == "wide") rc.schema.layout = rc.csv_layout = CsvLayout::wide;
    else if (*l == "long") rc.schema.layout = rc.csv_layout = CsvLayout::long_format;
    else throw ConfigError("layout must be wide or long");
  }
  if (file.role_column) rc.schema.role_column = *file.role_column;
  if (file.member1_role) rc.schema.member1_role = *file.member1_role;
  if (file.member2_role) rc.schema.member2_role = *file.member2_role;

  rc.seed = detail::merge("seed", flags.seed, file.seed, w).value_or(1);
  rc.threads = detail::merge("threads", flags.threads, file.threads, w).value_or(0);
  rc.out = detail::merge("out", flags.out, file.out, w);
  rc.inference.seed = rc.seed;
  rc.inference.threads = rc.threads;

  rc.preset = detail::merge("preset", flags.preset, file.preset, w);
  if (file.dgp) {
    if (flags.preset) w.push_back("config file dgp overrides --preset");
    rc.dgp = file.dgp;
    rc.preset.reset();
  }
  rc.n = detail::merge("n", flags.n, file.n, w).value_or(0);
  rc.csv = detail::merge("csv", flags.csv, file.csv, w);

  std::optional<std::vector<std::string>> flag_checks;
  if (!flags.checks.empty()) flag_checks = flags.checks;
  rc.checks = detail::merge("check", flag_checks, file.checks, w).value_or(std::vector<std::string>{"all"});
  if (std::find(rc.checks.begin(), rc.checks.end(), "all") != rc.checks.end()) rc.checks = check_names();
  for (const std::string& c : rc.checks)
    if (std::find(check_names().begin(), check_names().end(), c) == check_names().end())
      throw ConfigError("unknown check '" + c + "'");
  if (auto s = detail::merge("scale", flags.scale, file.scale, w)) {
    if (*s == "reduced") rc.scale = CheckScale::reduced;
    else if (*s == "full") rc.scale = CheckScale::full;
    else throw ConfigError("scale must be reduced or full");
  }
  rc.trials = detail::merge("trials", flags.trials, file.trials, w);
  if (rc.trials && *rc.trials < 1) throw ConfigError("trials must be positive");

  try {
    for (const Restriction& r : rc.restrictions) validate(r);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return rc;
}

}  // namespace pairbounds::cli
