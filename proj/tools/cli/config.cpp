#include "cli/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace cavlat::cli {

Section::Section(const json& source, std::string path) : source_(source), path_(std::move(path)) {
  if (source_.is_null()) source_ = json::object();
  if (!source_.is_object()) throw ConfigError(path_ + ": expected an object");
}

void Section::fail(const std::string& key, const std::string& what) const {
  throw ConfigError(path_ + "." + key + ": " + what);
}

const json* Section::lookup(const std::string& key) {
  if (std::find(used_.begin(), used_.end(), key) == used_.end()) used_.push_back(key);
  auto it = source_.find(key);
  if (it == source_.end() || it->is_null()) return nullptr;
  return &*it;
}

bool Section::has(const std::string& key) const {
  auto it = source_.find(key);
  return it != source_.end() && !it->is_null();
}

namespace {

double as_number(const json& v, bool& ok) {
  ok = v.is_number();
  if (!ok) return 0.0;
  const double x = v.get<double>();
  ok = std::isfinite(x);
  return x;
}

}  // namespace

double Section::number(const std::string& key, double fallback) {
  double x = fallback;
  if (const json* v = lookup(key)) {
    bool ok = false;
    x = as_number(*v, ok);
    if (!ok) fail(key, "expected a finite number");
  }
  canonical_[key] = x;
  return x;
}

double Section::number(const std::string& key) {
  if (!has(key)) fail(key, "required value missing");
  return number(key, 0.0);
}

long Section::integer(const std::string& key, long fallback) {
  long x = fallback;
  if (const json* v = lookup(key)) {
    if (!v->is_number_integer()) fail(key, "expected an integer");
    x = v->get<long>();
  }
  canonical_[key] = x;
  return x;
}

bool Section::boolean(const std::string& key, bool fallback) {
  bool x = fallback;
  if (const json* v = lookup(key)) {
    if (!v->is_boolean()) fail(key, "expected true or false");
    x = v->get<bool>();
  }
  canonical_[key] = x;
  return x;
}

std::string Section::text(const std::string& key, const std::string& fallback,
                          const std::vector<std::string>& allowed) {
  std::string x = fallback;
  if (const json* v = lookup(key)) {
    if (!v->is_string()) fail(key, "expected a string");
    x = v->get<std::string>();
  }
  if (!allowed.empty() && std::find(allowed.begin(), allowed.end(), x) == allowed.end()) {
    std::string list;
    for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
    fail(key, "'" + x + "' is not one of " + list);
  }
  canonical_[key] = x;
  return x;
}

std::vector<double> Section::numbers(const std::string& key, const std::vector<double>& fallback) {
  std::vector<double> x = fallback;
  if (const json* v = lookup(key)) {
    if (!v->is_array()) fail(key, "expected an array of numbers");
    x.clear();
    for (const auto& e : *v) {
      bool ok = false;
      x.push_back(as_number(e, ok));
      if (!ok) fail(key, "expected an array of finite numbers");
    }
  }
  canonical_[key] = x;
  return x;
}

std::vector<long> Section::integers(const std::string& key, const std::vector<long>& fallback) {
  std::vector<long> x = fallback;
  if (const json* v = lookup(key)) {
    if (!v->is_array()) fail(key, "expected an array of integers");
    x.clear();
    for (const auto& e : *v) {
      if (!e.is_number_integer()) fail(key, "expected an array of integers");
      x.push_back(e.get<long>());
    }
  }
  canonical_[key] = x;
  return x;
}

std::vector<std::pair<double, double>> Section::intervals(
    const std::string& key, const std::vector<std::pair<double, double>>& fallback) {
  std::vector<std::pair<double, double>> x = fallback;
  if (const json* v = lookup(key)) {
    if (!v->is_array()) fail(key, "expected an array of [t1, t2] pairs");
    x.clear();
    for (const auto& e : *v) {
      bool ok1 = false, ok2 = false;
      if (!e.is_array() || e.size() != 2) fail(key, "expected an array of [t1, t2] pairs");
      const double a = as_number(e[0], ok1), b = as_number(e[1], ok2);
      if (!ok1 || !ok2 || !(a < b)) fail(key, "each interval needs finite t1 < t2");
      x.emplace_back(a, b);
    }
  }
  json c = json::array();
  for (const auto& [a, b] : x) c.push_back({a, b});
  canonical_[key] = c;
  return x;
}

Section Section::child(const std::string& key) {
  const json* v = lookup(key);
  return Section(v ? *v : json::object(), path_ + "." + key);
}

void Section::adopt(const std::string& key, Section& child) {
  child.finish();
  canonical_[key] = child.canonical();
}

void Section::finish() {
  for (const auto& item : source_.items()) {
    if (std::find(used_.begin(), used_.end(), item.key()) == used_.end())
      throw ConfigError(path_ + ": unknown key '" + item.key() + "'");
  }
}

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    json j = json::parse(buf.str(), nullptr, true, /*ignore_comments=*/true);
    if (!j.is_object()) throw ConfigError(path + ": top level must be an object");
    return j;
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + assignment + "' is not of the form key.path=value");
  const std::string path = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &config;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
    if (key.empty()) throw ConfigError("override '" + assignment + "' has an empty key");
    if (!node->is_object()) throw ConfigError("override '" + path + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    if (!node->contains(key)) (*node)[key] = json::object();
    node = &(*node)[key];
    start = dot + 1;
  }
}

ModelParams read_params(Section& s, bool need_detuning) {
  Section p = s.child("params");
  ModelParams m;
  m.eta = p.number("eta");
  if (need_detuning)
    m.delta_c = p.number("delta_c");
  else if (p.has("delta_c"))
    m.delta_c = p.number("delta_c", 0.0);
  m.u0 = p.number("u0");
  m.kappa = p.number("kappa");
  s.adopt("params", p);
  try {
    m.validate();
  } catch (const std::exception& e) {
    throw ConfigError(p.path() + ": " + e.what());
  }
  return m;
}

HilbertGeometry read_geometry(Section& s, const HilbertGeometry& fallback) {
  Section g = s.child("geometry");
  HilbertGeometry out;
  out.n_ph_max = static_cast<int>(g.integer("n_ph_max", fallback.n_ph_max));
  out.j_max = static_cast<int>(g.integer("j_max", fallback.j_max));
  out.even_parity_only = g.boolean("even_parity_only", fallback.even_parity_only);
  s.adopt("geometry", g);
  try {
    out.validate();
  } catch (const std::exception& e) {
    throw ConfigError(g.path() + ": " + e.what());
  }
  return out;
}

TrajectoryConfig read_trajectory(Section& s, const ModelParams& params) {
  Section t = s.child("trajectory");
  TrajectoryConfig c;
  c.params = params;
  c.geometry = read_geometry(t, c.geometry);
  c.initial_n = static_cast<int>(t.integer("initial_n", c.initial_n));
  c.initial_j = static_cast<int>(t.integer("initial_j", c.initial_j));
  c.t_final = t.number("t_final", c.t_final);
  c.sample_dt = t.number("sample_dt", c.sample_dt);
  c.tolerance.rtol = t.number("rtol", c.tolerance.rtol);
  c.tolerance.atol = t.number("atol", c.tolerance.atol);
  c.fixed_step = t.number("fixed_step", c.fixed_step);
  c.jump_time_resolution = t.number("jump_time_resolution", c.jump_time_resolution);
  c.record_distributions = t.boolean("record_distributions", c.record_distributions);
  c.snapshot_times = t.numbers("snapshot_times", c.snapshot_times);
  s.adopt("trajectory", t);
  try {
    c.validate();
  } catch (const std::exception& e) {
    throw ConfigError(t.path() + ": " + e.what());
  }
  return c;
}

std::vector<double> read_detunings(Section& s, double fallback) {
  if (s.has("delta_c_values") && s.has("delta_c_range"))
    throw ConfigError(s.path() + ": give delta_c_values or delta_c_range, not both");
  if (s.has("delta_c_range")) {
    Section r = s.child("delta_c_range");
    const double from = r.number("from"), to = r.number("to");
    const long steps = r.integer("steps", 2);
    s.adopt("delta_c_range", r);
    if (steps < 1) throw ConfigError(r.path() + ".steps: must be >= 1");
    if (steps == 1) return {from};
    std::vector<double> out;
    for (long i = 0; i < steps; ++i)
      out.push_back(from + (to - from) * static_cast<double>(i) / static_cast<double>(steps - 1));
    return out;
  }
  auto v = s.numbers("delta_c_values", {fallback});
  if (v.empty()) throw ConfigError(s.path() + ".delta_c_values: must not be empty");
  return v;
}

}  // namespace cavlat::cli
