#include "flowsuper/config.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "flowsuper/errors.hpp"
#include "flowsuper/rng.hpp"

namespace flowsuper {

using nlohmann::json;

namespace {

// Strict object reader: every key must be consumed, otherwise UnknownKey.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "must be an object");
  }

  static std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }

  [[noreturn]] static void fail(const std::string& where, const std::string& what) {
    throw Error(ErrorCode::ValidationError, (where.empty() ? std::string("config") : where) + ": " + what);
  }

  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  const json* find(const std::string& key) {
    used_.insert(key);
    if (!j_.contains(key)) return nullptr;
    return &j_.at(key);
  }

  const json& require(const std::string& key) {
    const json* v = find(key);
    if (!v || v->is_null()) fail(join(path_, key), "is required");
    return *v;
  }

  double number(const std::string& key, std::optional<double> fallback = std::nullopt) {
    const json* v = find(key);
    if (!v || v->is_null()) {
      if (!fallback) fail(join(path_, key), "is required");
      return *fallback;
    }
    if (!v->is_number()) fail(join(path_, key), "must be a number");
    return v->get<double>();
  }

  std::optional<double> optional_number(const std::string& key) {
    const json* v = find(key);
    if (!v || v->is_null()) return std::nullopt;
    if (!v->is_number()) fail(join(path_, key), "must be a number");
    return v->get<double>();
  }

  template <class Int>
  Int integer(const std::string& key, std::optional<Int> fallback = std::nullopt) {
    const json* v = find(key);
    if (!v || v->is_null()) {
      if (!fallback) fail(join(path_, key), "is required");
      return *fallback;
    }
    if (!v->is_number_integer()) fail(join(path_, key), "must be an integer");
    if constexpr (std::is_unsigned_v<Int>) {
      if (v->is_number_unsigned()) return v->get<Int>();
      if (v->get<std::int64_t>() < 0) fail(join(path_, key), "must be nonnegative");
    }
    return v->get<Int>();
  }

  bool boolean(const std::string& key, bool fallback) {
    const json* v = find(key);
    if (!v || v->is_null()) return fallback;
    if (!v->is_boolean()) fail(join(path_, key), "must be true or false");
    return v->get<bool>();
  }

  std::string string(const std::string& key, std::optional<std::string> fallback = std::nullopt) {
    const json* v = find(key);
    if (!v || v->is_null()) {
      if (!fallback) fail(join(path_, key), "is required");
      return *fallback;
    }
    if (!v->is_string()) fail(join(path_, key), "must be a string");
    return v->get<std::string>();
  }

  std::vector<double> numbers(const std::string& key) {
    const json* v = find(key);
    if (!v || v->is_null()) return {};
    return as_numbers(*v, join(path_, key));
  }

  std::vector<std::string> strings(const std::string& key) {
    const json* v = find(key);
    if (!v || v->is_null()) return {};
    if (!v->is_array()) fail(join(path_, key), "must be an array of strings");
    std::vector<std::string> out;
    for (const auto& e : *v) {
      if (!e.is_string()) fail(join(path_, key), "must be an array of strings");
      out.push_back(e.get<std::string>());
    }
    return out;
  }

  Reader child(const std::string& key) {
    const json* v = find(key);
    static const json empty = json::object();
    return Reader(v && !v->is_null() ? *v : empty, join(path_, key));
  }

  const std::string& path() const { return path_; }

  // Rejects stray keys up front so a typo is reported before any missing field.
  void expect(std::initializer_list<const char*> keys) const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return it.key() == k; }))
        throw Error(ErrorCode::UnknownKey, "unknown key \"" + it.key() + "\" at " +
                                               (path_.empty() ? std::string("top level") : path_));
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!used_.count(it.key()))
        throw Error(ErrorCode::UnknownKey, "unknown key \"" + it.key() + "\" at " +
                                               (path_.empty() ? std::string("top level") : path_));
    }
  }

  static std::vector<double> as_numbers(const json& v, const std::string& where) {
    if (v.is_number()) return {v.get<double>()};
    if (!v.is_array()) fail(where, "must be an array of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) fail(where, "must be an array of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> from_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::MatrixXd to_matrix(const json& v, const std::string& where) {
  if (v.is_number()) return Eigen::MatrixXd::Constant(1, 1, v.get<double>());
  if (!v.is_array() || v.empty()) Reader::fail(where, "must be a number or a nonempty array of rows");
  const auto rows = static_cast<Eigen::Index>(v.size());
  Eigen::Index cols = -1;
  Eigen::MatrixXd m;
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto row = Reader::as_numbers(v[static_cast<std::size_t>(i)], where);
    if (cols < 0) {
      cols = static_cast<Eigen::Index>(row.size());
      m.resize(rows, cols);
    } else if (static_cast<Eigen::Index>(row.size()) != cols) {
      Reader::fail(where, "rows must have equal length");
    }
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = row[static_cast<std::size_t>(k)];
  }
  return m;
}

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    rows.push_back(row);
  }
  return rows;
}

const std::map<std::string, Profile> kProfiles{
    {"sine", Profile::Sine}, {"tanh", Profile::Tanh}, {"normal-cdf", Profile::NormalCdf}, {"indicator", Profile::Indicator}};
const std::map<std::string, FieldKind> kFieldKinds{{"constant", FieldKind::Constant},
                                                   {"affine", FieldKind::Affine},
                                                   {"bounded-smooth", FieldKind::BoundedSmooth},
                                                   {"step", FieldKind::Step}};
const std::map<std::string, PlacementKind> kPlacements{{"point", PlacementKind::Point},
                                                       {"grid", PlacementKind::Grid},
                                                       {"gaussian", PlacementKind::Gaussian},
                                                       {"explicit", PlacementKind::Explicit}};
const std::map<std::string, SlotKind> kSlots{
    {"one", SlotKind::One}, {"cosine", SlotKind::Cosine}, {"bump", SlotKind::GaussianBump}};
const std::map<std::string, MotionScheme> kSchemes{{"euler", MotionScheme::Euler}, {"exact", MotionScheme::Exact}};
const std::map<std::string, FormulaBackend> kBackends{{"closed", FormulaBackend::Closed},
                                                      {"mc", FormulaBackend::MonteCarlo}};

template <class E>
E lookup(const std::map<std::string, E>& table, const std::string& key, const std::string& where) {
  const auto it = table.find(key);
  if (it == table.end()) {
    std::string options;
    for (const auto& [k, v] : table) options += (options.empty() ? "" : ", ") + k;
    Reader::fail(where, "unknown value \"" + key + "\" (expected one of " + options + ")");
  }
  return it->second;
}

template <class E>
std::string name_of(const std::map<std::string, E>& table, E value) {
  for (const auto& [k, v] : table)
    if (v == value) return k;
  return "?";
}

// Keys each suite accepts besides "name".
const std::map<std::string, std::vector<std::string>>& suite_keys() {
  static const std::map<std::string, std::vector<std::string>> keys{
      {"first-moment", {"observables", "t"}},
      {"second-moment", {"observables", "s", "t"}},
      {"laplace", {"rho", "t"}},
      {"martingale", {"observables", "times", "relative_cap"}},
      {"common-noise", {"observables", "t", "relative_cap"}},
      {"dual-skeleton", {"skeletons", "max_level", "horizon"}},
      {"offspring-law", {"draws"}},
      {"sde-weak-order", {"observables", "dts", "paths", "horizon", "start"}},
      {"mollification", {"observables", "widths", "t"}},
  };
  return keys;
}

CoefficientField parse_field(Reader r) {
  const FieldKind kind = lookup(kFieldKinds, r.string("kind"), Reader::join(r.path(), "kind"));
  CoefficientField f;
  switch (kind) {
    case FieldKind::Constant: f = CoefficientField::constant(to_matrix(r.require("value"), r.path() + ".value")); break;
    case FieldKind::Affine:
      f = CoefficientField::affine(to_matrix(r.require("A"), r.path() + ".A"), to_vector(r.numbers("v")));
      break;
    case FieldKind::BoundedSmooth:
    case FieldKind::Step: {
      const int rows = r.integer<int>("rows", 1);
      const int cols = r.integer<int>("cols", 1);
      const json& list = r.require("entries");
      if (!list.is_array()) Reader::fail(r.path() + ".entries", "must be an array");
      std::vector<EntryFunction> entries;
      for (std::size_t i = 0; i < list.size(); ++i) {
        Reader er(list[i], r.path() + ".entries[" + std::to_string(i) + "]");
        EntryFunction e;
        e.profile = lookup(kProfiles, er.string("profile"), er.path() + ".profile");
        e.amplitude = er.number("amplitude");
        e.omega = to_vector(er.numbers("omega"));
        e.phase = er.number("phase", 0.0);
        e.offset = er.number("offset", 0.0);
        e.width = er.number("width", 1.0);
        er.finish();
        entries.push_back(std::move(e));
      }
      f = kind == FieldKind::Step ? CoefficientField::step(rows, cols, std::move(entries))
                                  : CoefficientField::bounded_smooth(rows, cols, std::move(entries));
      break;
    }
  }
  f.declared_lipschitz = r.number("lipschitz", 0.0);
  f.declared_bound = r.optional_number("bound");
  r.finish();
  return f;
}

json field_json(const CoefficientField& f) {
  json j;
  j["kind"] = name_of(kFieldKinds, f.kind());
  switch (f.kind()) {
    case FieldKind::Constant: j["value"] = matrix_json(f.constant_value()); break;
    case FieldKind::Affine:
      j["A"] = matrix_json(f.affine_matrix());
      j["v"] = from_vector(f.affine_offset());
      break;
    case FieldKind::BoundedSmooth:
    case FieldKind::Step: {
      j["rows"] = f.rows();
      j["cols"] = f.cols();
      json list = json::array();
      for (const auto& e : f.entries()) {
        list.push_back({{"profile", name_of(kProfiles, e.profile)},
                        {"amplitude", e.amplitude},
                        {"omega", from_vector(e.omega)},
                        {"phase", e.phase},
                        {"offset", e.offset},
                        {"width", e.width}});
      }
      j["entries"] = list;
      break;
    }
  }
  j["lipschitz"] = f.declared_lipschitz;
  j["bound"] = f.declared_bound ? json(*f.declared_bound) : json(nullptr);
  return j;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

void check_positive(double v, const std::string& where) {
  if (!(v > 0.0) || !std::isfinite(v)) Reader::fail(where, "must be positive");
}

void check_ids(const ScenarioConfig& c, const std::vector<std::string>& ids, const std::string& where) {
  for (const auto& id : ids) {
    if (id == "mass") continue;
    const bool found = std::any_of(c.run.observables.begin(), c.run.observables.end(),
                                   [&](const ObservableSpec& o) { return o.id == id; });
    if (!found) Reader::fail(where, "observable \"" + id + "\" is not defined in run.observables");
  }
}

void validate(const ScenarioConfig& c) {
  if (c.scale.n < 1) Reader::fail("scale.n", "must be at least 1");
  if (c.scale.initial_count < 1) Reader::fail("scale.K", "must be at least 1");
  check_positive(c.run.horizon, "run.T");
  check_positive(c.run.dt_max, "run.dt_max");
  if (c.run.replicates < 2) Reader::fail("run.replicates", "must be at least 2");
  for (double s : c.run.snap_times)
    if (s < 0.0 || s > c.run.horizon) Reader::fail("run.snap_times", "times must lie in [0, T]");
  std::set<std::string> ids;
  for (const auto& o : c.run.observables) {
    if (o.id.empty()) Reader::fail("run.observables", "ids must be nonempty");
    if (o.id == "mass") Reader::fail("run.observables", "the id \"mass\" is reserved");
    if (!ids.insert(o.id).second) Reader::fail("run.observables", "duplicate id \"" + o.id + "\"");
    const auto d = static_cast<Eigen::Index>(c.model.d);
    if (o.kind == SlotKind::Cosine && o.theta.size() != d) Reader::fail("run.observables." + o.id, "theta needs d entries");
    if (o.kind == SlotKind::GaussianBump && o.center.size() != d)
      Reader::fail("run.observables." + o.id, "center needs d entries");
  }
  if (c.dual.n0 < 1) Reader::fail("dual.n0", "must be at least 1");
  if (!c.dual.observables.empty() && static_cast<int>(c.dual.observables.size()) != c.dual.n0)
    Reader::fail("dual.observables", "needs one id per level (n0)");
  check_ids(c, c.dual.observables, "dual.observables");
  if (c.dual.t && *c.dual.t < 0.0) Reader::fail("dual.t", "must be nonnegative");
  if (c.moments.observables.size() > 3) Reader::fail("moments.observables", "at most 3 ids (moment order <= 3)");
  check_ids(c, c.moments.observables, "moments.observables");
  if (c.moments.s && c.moments.observables.size() != 2)
    Reader::fail("moments.s", "a mixed-time moment needs exactly two observables");
  if (c.moments.outer_nodes < 1 || c.moments.inner_nodes < 1) Reader::fail("moments", "node counts must be positive");
  for (const auto& s : c.verify.suites) {
    const std::string where = "verify.suites." + s.name;
    check_ids(c, s.observables, where + ".observables");
  }
}

}  // namespace

TestFunction ObservableSpec::function(int d) const {
  switch (kind) {
    case SlotKind::One: return TestFunction::one(d);
    case SlotKind::Cosine: return TestFunction::cosine(theta, phi);
    case SlotKind::GaussianBump: return TestFunction::bump(lambda, center);
  }
  return TestFunction::one(d);
}

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [k, v] : suite_keys()) out.push_back(k);
    return out;
  }();
  return names;
}

ScenarioConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw Error(ErrorCode::ParseError,
                "line " + std::to_string(line) + ", column " + std::to_string(col) + ": " + e.what());
  }

  Reader top(j, "");
  top.expect({"seed", "model", "scale", "run", "dual", "moments", "verify"});
  ScenarioConfig c;
  c.seed = top.integer<std::uint64_t>("seed", 0);

  {
    Reader m = top.child("model");
    m.expect({"d", "m", "b", "e", "c", "gamma", "sigma", "gamma_bound", "sigma_bound", "ellipticity_assumed"});
    c.model.d = m.integer<int>("d", 1);
    c.model.m = m.integer<int>("m", 1);
    const int d = c.model.d, mm = c.model.m;
    // Absent motion fields mean b = 0, e = I, c = 0.
    auto field_or = [&](const char* key, Eigen::MatrixXd fallback) {
      if (m.has(key)) return parse_field(m.child(key));
      m.find(key);
      return CoefficientField::constant(std::move(fallback));
    };
    c.model.b = field_or("b", Eigen::MatrixXd::Zero(d, 1));
    c.model.e = field_or("e", Eigen::MatrixXd::Identity(d, d));
    c.model.c = field_or("c", Eigen::MatrixXd::Zero(d, mm));
    c.model.gamma = parse_field(m.child("gamma"));
    c.model.sigma = parse_field(m.child("sigma"));
    c.model.gamma_bound = m.number("gamma_bound");
    c.model.sigma_bound = m.number("sigma_bound");
    c.model.ellipticity_assumed = m.boolean("ellipticity_assumed", true);
    m.finish();
  }
  {
    Reader s = top.child("scale");
    s.expect({"n", "K", "placement"});
    c.scale.n = s.integer<int>("n");
    c.scale.initial_count = s.integer<int>("K");
    Reader p = s.child("placement");
    auto& pl = c.scale.placement;
    pl.kind = lookup(kPlacements, p.string("kind", "point"), "scale.placement.kind");
    switch (pl.kind) {
      case PlacementKind::Point: {
        auto at = p.numbers("at");
        pl.at = at.empty() ? Eigen::VectorXd::Zero(c.model.d) : to_vector(at);
        break;
      }
      case PlacementKind::Grid:
        pl.lo = p.number("lo", -1.0);
        pl.hi = p.number("hi", 1.0);
        break;
      case PlacementKind::Gaussian: {
        auto mean = p.numbers("mean");
        pl.mean = mean.empty() ? Eigen::VectorXd::Zero(c.model.d) : to_vector(mean);
        pl.sd = p.number("sd", 1.0);
        break;
      }
      case PlacementKind::Explicit: {
        const json& pts = p.require("points");
        if (!pts.is_array()) Reader::fail("scale.placement.points", "must be an array of points");
        for (const auto& x : pts) pl.points.push_back(to_vector(Reader::as_numbers(x, "scale.placement.points")));
        break;
      }
    }
    p.finish();
    s.finish();
  }
  {
    Reader r = top.child("run");
    r.expect({"T", "dt_max", "replicates", "snap_times", "scheme", "population_cap", "observables"});
    c.run.horizon = r.number("T");
    c.run.dt_max = r.number("dt_max", 0.01);
    c.run.replicates = r.integer<std::size_t>("replicates", 100);
    c.run.snap_times = r.numbers("snap_times");
    c.run.scheme = lookup(kSchemes, r.string("scheme", "euler"), "run.scheme");
    c.run.population_cap = r.integer<std::size_t>("population_cap", 10'000'000);
    if (const json* obs = r.find("observables"); obs && !obs->is_null()) {
      if (!obs->is_array()) Reader::fail("run.observables", "must be an array");
      for (std::size_t i = 0; i < obs->size(); ++i) {
        Reader o((*obs)[i], "run.observables[" + std::to_string(i) + "]");
        ObservableSpec spec;
        spec.id = o.string("id");
        spec.kind = lookup(kSlots, o.string("kind"), o.path() + ".kind");
        auto theta = o.numbers("theta");
        spec.theta = theta.empty() ? Eigen::VectorXd::Zero(0) : to_vector(theta);
        spec.phi = o.number("phi", 0.0);
        spec.lambda = o.number("lambda", 1.0);
        auto center = o.numbers("center");
        spec.center = center.empty() ? Eigen::VectorXd::Zero(0) : to_vector(center);
        if (spec.kind == SlotKind::GaussianBump && spec.center.size() == 0) spec.center = Eigen::VectorXd::Zero(c.model.d);
        o.finish();
        c.run.observables.push_back(std::move(spec));
      }
    }
    r.finish();
  }
  {
    Reader d = top.child("dual");
    c.dual.n0 = d.integer<int>("n0", 1);
    c.dual.paths = d.integer<std::size_t>("paths", 10000);
    c.dual.observables = d.strings("observables");
    c.dual.t = d.optional_number("t");
    d.finish();
  }
  {
    Reader mo = top.child("moments");
    c.moments.t = mo.optional_number("t");
    c.moments.s = mo.optional_number("s");
    c.moments.observables = mo.strings("observables");
    c.moments.backend = lookup(kBackends, mo.string("backend", "closed"), "moments.backend");
    c.moments.paths = mo.integer<std::size_t>("paths", 10000);
    c.moments.outer_nodes = mo.integer<int>("outer_nodes", 32);
    c.moments.inner_nodes = mo.integer<int>("inner_nodes", 16);
    c.moments.laplace_rho = mo.numbers("laplace_rho");
    mo.finish();
  }
  {
    Reader v = top.child("verify");
    c.verify.z_threshold = v.number("z_threshold", 3.0);
    c.verify.formula_paths = v.integer<std::size_t>("formula_paths", 0);
    if (const json* suites = v.find("suites"); suites && !suites->is_null()) {
      if (!suites->is_array()) Reader::fail("verify.suites", "must be an array");
      for (std::size_t i = 0; i < suites->size(); ++i) {
        Reader s((*suites)[i], "verify.suites[" + std::to_string(i) + "]");
        SuiteConfig sc;
        sc.name = s.string("name");
        const auto keys = suite_keys().find(sc.name);
        if (keys == suite_keys().end()) {
          std::string options;
          for (const auto& n : suite_names()) options += (options.empty() ? "" : ", ") + n;
          Reader::fail(s.path() + ".name", "unknown suite \"" + sc.name + "\" (expected one of " + options + ")");
        }
        const auto allowed = [&](const char* k) {
          return std::find(keys->second.begin(), keys->second.end(), k) != keys->second.end();
        };
        if (allowed("observables")) sc.observables = s.strings("observables");
        if (allowed("t")) sc.t = s.optional_number("t");
        if (allowed("s")) sc.s = s.optional_number("s");
        if (allowed("rho")) sc.rho = s.numbers("rho");
        if (allowed("times")) sc.times = s.numbers("times");
        if (allowed("relative_cap")) sc.relative_cap = s.optional_number("relative_cap");
        if (allowed("skeletons")) sc.skeletons = s.integer<std::size_t>("skeletons", sc.skeletons);
        if (allowed("max_level")) sc.max_level = s.integer<int>("max_level", sc.max_level);
        if (allowed("horizon")) sc.horizon = s.number("horizon", sc.horizon);
        if (allowed("draws")) sc.draws = s.integer<std::size_t>("draws", sc.draws);
        if (allowed("dts")) sc.dts = s.numbers("dts");
        if (allowed("paths")) sc.paths = s.integer<std::size_t>("paths", sc.paths);
        if (allowed("start")) {
          auto st = s.numbers("start");
          sc.start = st.empty() ? Eigen::VectorXd::Zero(c.model.d) : to_vector(st);
        }
        if (allowed("widths")) sc.widths = s.numbers("widths");
        s.finish();
        c.verify.suites.push_back(std::move(sc));
      }
    }
    v.finish();
  }
  top.finish();
  validate(c);
  // Surface model errors at parse time.
  (void)validate_model(c.model);
  return c;
}

ScenarioConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

namespace {

json config_json(const ScenarioConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["model"] = {{"d", c.model.d},
                {"m", c.model.m},
                {"b", field_json(c.model.b)},
                {"e", field_json(c.model.e)},
                {"c", field_json(c.model.c)},
                {"gamma", field_json(c.model.gamma)},
                {"sigma", field_json(c.model.sigma)},
                {"gamma_bound", c.model.gamma_bound},
                {"sigma_bound", c.model.sigma_bound},
                {"ellipticity_assumed", c.model.ellipticity_assumed}};
  const auto& pl = c.scale.placement;
  json p;
  p["kind"] = name_of(kPlacements, pl.kind);
  switch (pl.kind) {
    case PlacementKind::Point: p["at"] = from_vector(pl.at); break;
    case PlacementKind::Grid:
      p["lo"] = pl.lo;
      p["hi"] = pl.hi;
      break;
    case PlacementKind::Gaussian:
      p["mean"] = from_vector(pl.mean);
      p["sd"] = pl.sd;
      break;
    case PlacementKind::Explicit: {
      json pts = json::array();
      for (const auto& x : pl.points) pts.push_back(from_vector(x));
      p["points"] = pts;
      break;
    }
  }
  j["scale"] = {{"n", c.scale.n}, {"K", c.scale.initial_count}, {"placement", p}};
  json obs = json::array();
  for (const auto& o : c.run.observables) {
    json oj{{"id", o.id}, {"kind", name_of(kSlots, o.kind)}};
    if (o.kind == SlotKind::Cosine) {
      oj["theta"] = from_vector(o.theta);
      oj["phi"] = o.phi;
    } else if (o.kind == SlotKind::GaussianBump) {
      oj["lambda"] = o.lambda;
      oj["center"] = from_vector(o.center);
    }
    obs.push_back(oj);
  }
  j["run"] = {{"T", c.run.horizon},
              {"dt_max", c.run.dt_max},
              {"replicates", c.run.replicates},
              {"snap_times", c.run.snap_times},
              {"scheme", name_of(kSchemes, c.run.scheme)},
              {"population_cap", c.run.population_cap},
              {"observables", obs}};
  j["dual"] = {{"n0", c.dual.n0},
               {"paths", c.dual.paths},
               {"observables", c.dual.observables},
               {"t", optional_json(c.dual.t)}};
  j["moments"] = {{"t", optional_json(c.moments.t)},
                  {"s", optional_json(c.moments.s)},
                  {"observables", c.moments.observables},
                  {"backend", name_of(kBackends, c.moments.backend)},
                  {"paths", c.moments.paths},
                  {"outer_nodes", c.moments.outer_nodes},
                  {"inner_nodes", c.moments.inner_nodes},
                  {"laplace_rho", c.moments.laplace_rho}};
  json suites = json::array();
  for (const auto& s : c.verify.suites) {
    json sj{{"name", s.name}};
    for (const auto& k : suite_keys().at(s.name)) {
      if (k == "observables") sj[k] = s.observables;
      if (k == "t") sj[k] = optional_json(s.t);
      if (k == "s") sj[k] = optional_json(s.s);
      if (k == "rho") sj[k] = s.rho;
      if (k == "times") sj[k] = s.times;
      if (k == "relative_cap") sj[k] = optional_json(s.relative_cap);
      if (k == "skeletons") sj[k] = s.skeletons;
      if (k == "max_level") sj[k] = s.max_level;
      if (k == "horizon") sj[k] = s.horizon;
      if (k == "draws") sj[k] = s.draws;
      if (k == "dts") sj[k] = s.dts;
      if (k == "paths") sj[k] = s.paths;
      if (k == "start") sj[k] = from_vector(s.start);
      if (k == "widths") sj[k] = s.widths;
    }
    suites.push_back(sj);
  }
  j["verify"] = {{"z_threshold", c.verify.z_threshold}, {"formula_paths", c.verify.formula_paths}, {"suites", suites}};
  return j;
}

}  // namespace

std::string serialize_config(const ScenarioConfig& config) { return config_json(config).dump(2) + "\n"; }

std::string config_hash(const ScenarioConfig& config) {
  json j = config_json(config);
  j.erase("seed");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
  return buf;
}

ValidatedModel config_model(const ScenarioConfig& config) { return validate_model(config.model); }

TestFunction config_observable(const ScenarioConfig& config, const std::string& id) {
  if (id == "mass") return TestFunction::one(config.model.d);
  for (const auto& o : config.run.observables)
    if (o.id == id) return o.function(config.model.d);
  throw Error(ErrorCode::ValidationError, "observable \"" + id + "\" is not defined");
}

}  // namespace flowsuper
