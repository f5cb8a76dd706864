#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "atsmc/lmm.hpp"
#include "atsmc/smc.hpp"

namespace atsmc::io {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Single numeric column: one value per line, '#' comments and a non-numeric
/// header line are skipped.
std::vector<double> read_column_csv(const std::filesystem::path& path);

/// Grouped panel CSV with header subject,age,height,group. Group dummies plus
/// age form the fixed-effect design; the intercept is the random effect.
lmm::LmmData read_lmm_csv(const std::filesystem::path& path);

enum class ModelKind { Dpm, Pym, Nrmii, Lmm, Ts };
enum class TruncationKind { Rsb, Sb, Fk, Cpp };
enum class Preprocess { None, Scale10k, Standardize };

struct RunConfig {
  ModelKind model = ModelKind::Dpm;
  TruncationKind truncation = TruncationKind::Rsb;
  int particles = 1000;
  double epsilon = 1e-3;
  int m_stop = 3;
  int n_rejuv = 3;
  double resample_threshold = 0.7;
  std::uint64_t seed = 1;
  long max_iters = 5000;
  long burn_in = 5000;
  int thin = 5;
  int threads = 1;
  int initial_atoms = 10;       // N_1 (stick/FK) or expected CPP atoms
  std::string level_scheme = "one_atom";  // cpp: one_atom | geometric
  double xi = 0.1;              // cpp geometric increment
  double mass = 1.0;
  bool mass_fixed = false;      // default: M ~ Exp(1)
  double discount = 0.0;        // pym initial value
  std::string discrepancy = "ess";  // ess | predictive
  double predictive_point = 0.0;
  Preprocess preprocess = Preprocess::None;
  bool preprocess_set = false;  // explicit key overrides the model default
  // mixture hyperparameters; nan means derive from the data
  double mu0 = std::numeric_limits<double>::quiet_NaN();
  double sigma2 = 10.0;
  double alpha = 3.0;
  double beta = std::numeric_limits<double>::quiet_NaN();
  std::string data_path;
  std::string out_dir = "out";
  bool save_particles = false;
  double grid_lo = 0.0, grid_hi = 4.0, grid_step = 0.01;

  void validate() const;
};

RunConfig parse_config(const std::filesystem::path& path);
RunConfig parse_config_text(const std::string& text);
std::string emit_config(const RunConfig& config);

std::string model_name(ModelKind m);
std::string truncation_name(TruncationKind t);

/// Format with 17 significant digits (round-trip exact for doubles).
std::string fmt17(double v);

void write_ess_trace(const std::filesystem::path& path,
                     const std::vector<smc::EssRecord>& trace);
void write_density_csv(const std::filesystem::path& path,
                       const std::string& value_name,
                       std::span<const double> grid,
                       std::span<const double> density);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace atsmc::io
