#include "atsmc/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace atsmc::io {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& s, double& out) {
  try {
    std::size_t pos = 0;
    out = std::stod(s, &pos);
    return pos == s.size();
  } catch (...) {
    return false;
  }
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  return out;
}

}  // namespace

std::vector<double> read_column_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open data file: " + path.string());
  std::vector<double> values;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    double v;
    if (!parse_double(split_csv(t)[0], v)) {
      if (first) {
        first = false;
        continue;  // header
      }
      throw std::runtime_error("bad numeric line in " + path.string() + ": " + t);
    }
    first = false;
    values.push_back(v);
  }
  if (values.empty()) throw std::runtime_error("no data in " + path.string());
  return values;
}

lmm::LmmData read_lmm_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open data file: " + path.string());
  std::string line;
  std::vector<int> subject, group;
  std::vector<double> age, height;
  bool first = true;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::vector<std::string> f = split_csv(t);
    if (f.size() != 4)
      throw std::runtime_error("grouped CSV needs subject,age,height,group");
    double a, h, s, g;
    if (!parse_double(f[0], s) || !parse_double(f[1], a) ||
        !parse_double(f[2], h) || !parse_double(f[3], g)) {
      if (first) {
        first = false;
        continue;
      }
      throw std::runtime_error("bad row in " + path.string() + ": " + t);
    }
    first = false;
    subject.push_back(static_cast<int>(s));
    age.push_back(a);
    height.push_back(h);
    group.push_back(static_cast<int>(g));
  }
  return lmm::schoolgirl_design(subject, age, height, group);
}

void RunConfig::validate() const {
  const bool stick = truncation == TruncationKind::Rsb || truncation == TruncationKind::Sb;
  switch (model) {
    case ModelKind::Dpm:
      if (truncation == TruncationKind::Cpp)
        throw ConfigError("model dpm supports truncations rsb, sb, fk");
      break;
    case ModelKind::Pym:
      if (!stick)
        throw ConfigError("model pym supports stick-breaking truncations only");
      break;
    case ModelKind::Nrmii:
      if (truncation != TruncationKind::Cpp)
        throw ConfigError("model nrmii uses the cpp truncation only");
      break;
    case ModelKind::Lmm:
    case ModelKind::Ts:
      if (truncation != TruncationKind::Rsb)
        throw ConfigError("models lmm and ts use the rsb truncation only");
      break;
  }
  if (level_scheme != "one_atom" && level_scheme != "geometric")
    throw ConfigError("scheme must be one_atom or geometric");
  if (discrepancy != "ess" && discrepancy != "predictive")
    throw ConfigError("discrepancy must be ess or predictive");
  if (particles < 2) throw ConfigError("particles must be >= 2");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (!(resample_threshold > 0.0) || !(resample_threshold <= 1.0))
    throw ConfigError("b must lie in (0,1]");
  if (m_stop < 1 || n_rejuv < 1) throw ConfigError("m_stop and n_rejuv must be >= 1");
  if (initial_atoms < 1) throw ConfigError("N_1 must be >= 1");
  if (!(mass > 0.0)) throw ConfigError("mass must be positive");
  if (discount < 0.0 || discount >= 1.0) throw ConfigError("discount must lie in [0,1)");
  if (data_path.empty()) throw ConfigError("data path is required");
  if (!(grid_step > 0.0) || !(grid_hi > grid_lo)) throw ConfigError("bad density grid");
}

namespace {

ModelKind parse_model(const std::string& s) {
  if (s == "dpm") return ModelKind::Dpm;
  if (s == "pym") return ModelKind::Pym;
  if (s == "nrmii") return ModelKind::Nrmii;
  if (s == "lmm") return ModelKind::Lmm;
  if (s == "ts") return ModelKind::Ts;
  throw ConfigError("unknown model: " + s);
}

TruncationKind parse_truncation(const std::string& s) {
  if (s == "rsb") return TruncationKind::Rsb;
  if (s == "sb") return TruncationKind::Sb;
  if (s == "fk") return TruncationKind::Fk;
  if (s == "cpp") return TruncationKind::Cpp;
  throw ConfigError("unknown truncation: " + s);
}

Preprocess parse_preprocess(const std::string& s) {
  if (s == "none") return Preprocess::None;
  if (s == "scale10k") return Preprocess::Scale10k;
  if (s == "standardize") return Preprocess::Standardize;
  throw ConfigError("unknown preprocess: " + s);
}

}  // namespace

std::string model_name(ModelKind m) {
  switch (m) {
    case ModelKind::Dpm: return "dpm";
    case ModelKind::Pym: return "pym";
    case ModelKind::Nrmii: return "nrmii";
    case ModelKind::Lmm: return "lmm";
    case ModelKind::Ts: return "ts";
  }
  return "?";
}

std::string truncation_name(TruncationKind t) {
  switch (t) {
    case TruncationKind::Rsb: return "rsb";
    case TruncationKind::Sb: return "sb";
    case TruncationKind::Fk: return "fk";
    case TruncationKind::Cpp: return "cpp";
  }
  return "?";
}

std::string preprocess_name(Preprocess p) {
  switch (p) {
    case Preprocess::None: return "none";
    case Preprocess::Scale10k: return "scale10k";
    case Preprocess::Standardize: return "standardize";
  }
  return "?";
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig c;
  std::stringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    auto as_double = [&](const char* name) {
      double v;
      if (!parse_double(value, v)) throw ConfigError(std::string("bad value for ") + name);
      return v;
    };
    auto as_long = [&](const char* name) {
      return static_cast<long>(as_double(name));
    };
    if (key == "model") c.model = parse_model(value);
    else if (key == "truncation") c.truncation = parse_truncation(value);
    else if (key == "particles") c.particles = static_cast<int>(as_long("particles"));
    else if (key == "epsilon") c.epsilon = as_double("epsilon");
    else if (key == "m_stop") c.m_stop = static_cast<int>(as_long("m_stop"));
    else if (key == "n_rejuv") c.n_rejuv = static_cast<int>(as_long("n_rejuv"));
    else if (key == "b") c.resample_threshold = as_double("b");
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(as_long("seed"));
    else if (key == "max_iters") c.max_iters = as_long("max_iters");
    else if (key == "burn_in") c.burn_in = as_long("burn_in");
    else if (key == "thin") c.thin = static_cast<int>(as_long("thin"));
    else if (key == "threads") c.threads = static_cast<int>(as_long("threads"));
    else if (key == "N_1") c.initial_atoms = static_cast<int>(as_long("N_1"));
    else if (key == "scheme") c.level_scheme = value;
    else if (key == "xi") c.xi = as_double("xi");
    else if (key == "mass") c.mass = as_double("mass");
    else if (key == "mass_fixed") c.mass_fixed = value == "true" || value == "1";
    else if (key == "discount") c.discount = as_double("discount");
    else if (key == "discrepancy") c.discrepancy = value;
    else if (key == "y_star") c.predictive_point = as_double("y_star");
    else if (key == "preprocess") { c.preprocess = parse_preprocess(value); c.preprocess_set = true; }
    else if (key == "mu0") c.mu0 = as_double("mu0");
    else if (key == "sigma2") c.sigma2 = as_double("sigma2");
    else if (key == "alpha") c.alpha = as_double("alpha");
    else if (key == "beta") c.beta = as_double("beta");
    else if (key == "data") c.data_path = value;
    else if (key == "out") c.out_dir = value;
    else if (key == "save_particles") c.save_particles = value == "true" || value == "1";
    else if (key == "grid_lo") c.grid_lo = as_double("grid_lo");
    else if (key == "grid_hi") c.grid_hi = as_double("grid_hi");
    else if (key == "grid_step") c.grid_step = as_double("grid_step");
    else throw ConfigError("unknown key: " + key);
  }
  if (!c.preprocess_set) {
    switch (c.model) {
      case ModelKind::Dpm:
      case ModelKind::Pym:
      case ModelKind::Nrmii:
        c.preprocess = Preprocess::Scale10k;
        break;
      case ModelKind::Ts:
        c.preprocess = Preprocess::Standardize;
        break;
      case ModelKind::Lmm:
        c.preprocess = Preprocess::None;
        break;
    }
  }
  return c;
}

RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string emit_config(const RunConfig& c) {
  std::ostringstream out;
  out << "model = " << model_name(c.model) << "\n";
  out << "truncation = " << truncation_name(c.truncation) << "\n";
  out << "particles = " << c.particles << "\n";
  out << "epsilon = " << fmt17(c.epsilon) << "\n";
  out << "m_stop = " << c.m_stop << "\n";
  out << "n_rejuv = " << c.n_rejuv << "\n";
  out << "b = " << fmt17(c.resample_threshold) << "\n";
  out << "seed = " << c.seed << "\n";
  out << "max_iters = " << c.max_iters << "\n";
  out << "burn_in = " << c.burn_in << "\n";
  out << "thin = " << c.thin << "\n";
  out << "threads = " << c.threads << "\n";
  out << "N_1 = " << c.initial_atoms << "\n";
  out << "scheme = " << c.level_scheme << "\n";
  out << "xi = " << fmt17(c.xi) << "\n";
  out << "mass = " << fmt17(c.mass) << "\n";
  out << "mass_fixed = " << (c.mass_fixed ? "true" : "false") << "\n";
  out << "discount = " << fmt17(c.discount) << "\n";
  out << "discrepancy = " << c.discrepancy << "\n";
  out << "y_star = " << fmt17(c.predictive_point) << "\n";
  out << "preprocess = " << preprocess_name(c.preprocess) << "\n";
  if (std::isfinite(c.mu0)) out << "mu0 = " << fmt17(c.mu0) << "\n";
  out << "sigma2 = " << fmt17(c.sigma2) << "\n";
  out << "alpha = " << fmt17(c.alpha) << "\n";
  if (std::isfinite(c.beta)) out << "beta = " << fmt17(c.beta) << "\n";
  out << "data = " << c.data_path << "\n";
  out << "out = " << c.out_dir << "\n";
  out << "save_particles = " << (c.save_particles ? "true" : "false") << "\n";
  out << "grid_lo = " << fmt17(c.grid_lo) << "\n";
  out << "grid_hi = " << fmt17(c.grid_hi) << "\n";
  out << "grid_step = " << fmt17(c.grid_step) << "\n";
  return out.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_ess_trace(const std::filesystem::path& path,
                     const std::vector<smc::EssRecord>& trace) {
  std::ostringstream out;
  out << "iteration,ess,discrepancy,resampled\n";
  for (const auto& r : trace)
    out << r.iteration << "," << fmt17(r.ess) << "," << fmt17(r.discrepancy)
        << "," << (r.resampled ? 1 : 0) << "\n";
  write_text(path, out.str());
}

void write_density_csv(const std::filesystem::path& path,
                       const std::string& value_name,
                       std::span<const double> grid,
                       std::span<const double> density) {
  std::ostringstream out;
  out << "x," << value_name << "\n";
  for (std::size_t g = 0; g < grid.size(); ++g)
    out << fmt17(grid[g]) << "," << fmt17(density[g]) << "\n";
  write_text(path, out.str());
}

}  // namespace atsmc::io
