#pragma once

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mmtc/analysis.hpp"
#include "mmtc/baselines.hpp"
#include "mmtc/common.hpp"
#include "mmtc/config.hpp"
#include "mmtc/detector.hpp"
#include "mmtc/idd.hpp"
#include "mmtc/ldpc.hpp"
#include "mmtc/metadata.hpp"
#include "mmtc/traffic.hpp"

namespace mmtc {

// Set by the CLI's signal handler; the runner finishes the SNR point in
// flight is *not* guaranteed — completed points are flushed, the rest dropped.
inline std::atomic<bool> g_interrupted{false};

struct ExperimentSpec {
  std::string preset = "custom";  // fig4a|fig5|fig6|fig7|fig8|fig9|custom
  std::vector<double> snr_grid{4, 6, 8, 10, 12, 14, 16};
  long trials = 10000;
  std::vector<std::string> detectors{"oracle_lmmse",    "lmmse",
                                     "aa_rls_linear",   "aa_rls_linear_il",
                                     "aa_rls_df",       "aa_rls_df_il",
                                     "aa_vgl_df"};
  SystemConfig config;
  DetectorOptions detector;
  IddOptions idd;
  std::string out_dir = ".";
  int workers = 0;  // 0 = hardware concurrency, capped by MMTC_THREADS
  int slots_per_frame = 1;
  int sumrate_mc_samples = 2000;

  void validate() const {
    static const std::set<std::string> known{"fig4a", "fig5", "fig6", "fig7",
                                             "fig8",  "fig9", "custom"};
    if (!known.count(preset))
      throw std::invalid_argument("ExperimentSpec: unknown preset '" + preset +
                                  "'");
    if (trials < 1) throw std::invalid_argument("ExperimentSpec: trials < 1");
    if (snr_grid.empty())
      throw std::invalid_argument("ExperimentSpec: empty snr_grid");
    for (size_t i = 1; i < snr_grid.size(); ++i)
      if (!(snr_grid[i] > snr_grid[i - 1]))
        throw std::invalid_argument(
            "ExperimentSpec: snr_grid must be strictly increasing");
    if (detectors.empty())
      throw std::invalid_argument("ExperimentSpec: empty detector set");
    if (workers < 0) throw std::invalid_argument("ExperimentSpec: workers < 0");
    if (slots_per_frame < 1)
      throw std::invalid_argument("ExperimentSpec: slots_per_frame < 1");
    if (sumrate_mc_samples < 1)
      throw std::invalid_argument("ExperimentSpec: sumrate_mc_samples < 1");
    config.validate();
  }
};

struct ResultSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> ci_low;
  std::vector<double> ci_high;
  std::vector<long> trials;
};

// 95% Wilson score interval for a binomial proportion.
inline std::pair<double, double> wilson_interval(long successes, long n,
                                                 double z = 1.959963984540054) {
  if (n <= 0) return {0.0, 1.0};
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double centre = (p + z2 / (2.0 * n)) / denom;
  const double half =
      z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  // pin the degenerate endpoints so the interval always contains p
  const double lo = successes <= 0 ? 0.0 : std::max(0.0, centre - half);
  const double hi = successes >= n ? 1.0 : std::min(1.0, centre + half);
  return {lo, hi};
}

// Applies the fields a preset owns (grid, trials, geometry, series set);
// seed, output directory and worker count are left untouched.
inline void apply_preset_fields(ExperimentSpec& spec, const std::string& name) {
  spec.preset = name;
  SystemConfig& c = spec.config;
  c.n_devices = 16;
  c.m_antennas = 8;
  c.tau_phi = 8;
  c.tau_x = 8;
  c.rate_factor = 1.0;
  spec.trials = 10000;
  spec.slots_per_frame = 1;
  if (name == "fig4a") {
    spec.snr_grid = {4, 8, 12, 16};
    spec.detectors = {"aa_vgl_df"};
  } else if (name == "fig5") {
    spec.snr_grid = {8, 16, 32, 64, 128, 256};  // x axis carries N, not dB
    spec.trials = 1;
    spec.detectors = {"lmmse",         "sa_sic",       "sa_sic_asqrd",
                      "aa_rls_linear", "aa_rls_linear_il", "aa_rls_df",
                      "aa_rls_df_il",  "aa_vgl_df"};
  } else if (name == "fig6" || name == "custom") {
    spec.snr_grid = {4, 6, 8, 10, 12, 14, 16};
    spec.detectors = {"oracle_lmmse",  "lmmse",
                      "aa_rls_linear", "aa_rls_linear_il",
                      "aa_rls_df",     "aa_rls_df_il",
                      "aa_vgl_df"};
  } else if (name == "fig7") {
    spec.snr_grid = {4, 7, 10, 13, 16};
    c.tau_x = 64;
    c.rate_factor = 0.5;
    spec.detectors = {"aa_vgl_df"};
    spec.idd.n_iterations = 2;
  } else if (name == "fig8") {
    spec.snr_grid = {0, 4, 8, 12, 16, 20};
    spec.trials = 1;
    spec.detectors = {"sumrate_a1_b9", "sumrate_a4_b8", "sumrate_a6_b6"};
  } else if (name == "fig9") {
    spec.snr_grid = {0, 8, 16};
    spec.trials = 1;
    spec.sumrate_mc_samples = 300;
    spec.detectors = {"sumrate_lmmse_perfect", "sumrate_lmmse_imperfect",
                      "sumrate_aa_vgl_df"};
  } else if (name != "custom") {
    throw std::invalid_argument("apply_preset_fields: unknown preset '" +
                                name + "'");
  }
}

inline ExperimentSpec make_preset(const std::string& name) {
  ExperimentSpec spec;
  apply_preset_fields(spec, name);
  return spec;
}

// Paper-scale geometry behind an explicit opt-in; the coded preset keeps the
// codeword fitting exactly into two slots.
inline void apply_paper_scale(ExperimentSpec& spec) {
  SystemConfig& c = spec.config;
  c.n_devices = 128;
  c.m_antennas = 64;
  c.tau_phi = 60;
  c.tau_x = 68;
  spec.trials = 100000;
  if (spec.preset == "fig7") {
    c.tau_x = 64;
    spec.slots_per_frame = 2;
  }
}

// ---- CSV emission ----

inline std::string series_csv(const ResultSeries& s) {
  std::string out = "x,y,ci_low,ci_high,trials\n";
  char buf[160];
  for (size_t i = 0; i < s.x.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.9g,%.12g,%.12g,%.12g,%ld\n", s.x[i],
                  s.y[i], s.ci_low[i], s.ci_high[i], s.trials[i]);
    out += buf;
  }
  return out;
}

inline std::vector<std::string> write_experiment_csvs(
    const std::vector<ResultSeries>& series, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> paths;
  for (const auto& s : series) {
    const std::string path = dir + "/" + s.name + ".csv";
    std::ofstream out(path, std::ios::binary);  // keep LF endings everywhere
    if (!out)
      throw std::runtime_error("write_experiment_csvs: cannot open " + path);
    out << series_csv(s);
    if (!out)
      throw std::runtime_error("write_experiment_csvs: write failed " + path);
    paths.push_back(path);
  }
  return paths;
}

// ---- configuration file ----

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config: key '" + key +
                              "' expects true/false/1/0, got '" + v + "'");
}

inline long parse_long(const std::string& key, const std::string& v) {
  size_t pos = 0;
  long r = 0;
  try {
    r = std::stol(v, &pos);
  } catch (const std::exception&) {
    pos = std::string::npos;
  }
  if (pos != v.size())
    throw std::invalid_argument("config: key '" + key +
                                "' expects an integer, got '" + v + "'");
  return r;
}

inline double parse_double(const std::string& key, const std::string& v) {
  size_t pos = 0;
  double r = 0;
  try {
    r = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = std::string::npos;
  }
  if (pos != v.size())
    throw std::invalid_argument("config: key '" + key +
                                "' expects a number, got '" + v + "'");
  return r;
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace detail

// INI-style configuration: [system], [experiment], [detector], [idd]
// sections; '#' and ';' start comments; unknown sections or keys are
// rejected with a diagnostic naming them. Values are applied on top of
// whatever spec is passed in, so precedence is caller-controlled.
inline void apply_config_file(ExperimentSpec& spec, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot read '" + path + "'");
  std::string line, section = "experiment";
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::invalid_argument("config: malformed section at line " +
                                    std::to_string(lineno));
      section = detail::trim(line.substr(1, line.size() - 2));
      if (section != "system" && section != "experiment" &&
          section != "detector" && section != "idd")
        throw std::invalid_argument("config: unknown section [" + section +
                                    "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: expected key=value at line " +
                                  std::to_string(lineno));
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));

    SystemConfig& c = spec.config;
    DetectorOptions& d = spec.detector;
    if (section == "system") {
      if (key == "n_devices") c.n_devices = static_cast<int>(detail::parse_long(key, val));
      else if (key == "m_antennas") c.m_antennas = static_cast<int>(detail::parse_long(key, val));
      else if (key == "tau_phi") c.tau_phi = static_cast<int>(detail::parse_long(key, val));
      else if (key == "tau_x") c.tau_x = static_cast<int>(detail::parse_long(key, val));
      else if (key == "snr_db") c.snr_db = detail::parse_double(key, val);
      else if (key == "lambda") c.lambda = detail::parse_double(key, val);
      else if (key == "gamma") c.gamma = detail::parse_double(key, val);
      else if (key == "xi") c.xi = detail::parse_double(key, val);
      else if (key == "alpha") c.alpha = detail::parse_double(key, val);
      else if (key == "beta") c.beta = detail::parse_double(key, val);
      else if (key == "power_min") c.power_min = detail::parse_double(key, val);
      else if (key == "power_max") c.power_max = detail::parse_double(key, val);
      else if (key == "sigma_omega") c.sigma_omega = detail::parse_double(key, val);
      else if (key == "rate_factor") c.rate_factor = detail::parse_double(key, val);
      else if (key == "seed") c.seed = static_cast<uint64_t>(detail::parse_long(key, val));
      else throw std::invalid_argument("config: unknown key '" + key + "' in [system]");
    } else if (section == "experiment") {
      if (key == "preset") { apply_preset_fields(spec, val); }
      else if (key == "trials") spec.trials = detail::parse_long(key, val);
      else if (key == "snr_grid") {
        spec.snr_grid.clear();
        for (const auto& t : detail::split_list(val))
          spec.snr_grid.push_back(detail::parse_double(key, t));
      }
      else if (key == "detectors") spec.detectors = detail::split_list(val);
      else if (key == "out_dir") spec.out_dir = val;
      else if (key == "workers") spec.workers = static_cast<int>(detail::parse_long(key, val));
      else if (key == "slots_per_frame") spec.slots_per_frame = static_cast<int>(detail::parse_long(key, val));
      else if (key == "sumrate_mc_samples") spec.sumrate_mc_samples = static_cast<int>(detail::parse_long(key, val));
      else throw std::invalid_argument("config: unknown key '" + key + "' in [experiment]");
    } else if (section == "detector") {
      if (key == "decision_feedback") d.decision_feedback = detail::parse_bool(key, val);
      else if (key == "internal_list") d.internal_list = detail::parse_bool(key, val);
      else if (key == "external_list") d.external_list = detail::parse_bool(key, val);
      else if (key == "external_list_max") d.external_list_max = static_cast<int>(detail::parse_long(key, val));
      else if (key == "r_th") d.r_th_override = detail::parse_double(key, val);
      else if (key == "delta_reg") d.delta_reg = detail::parse_double(key, val);
      else if (key == "printed_attraction") d.printed_attraction = detail::parse_bool(key, val);
      else if (key == "internal_list_on_residual") d.internal_list_on_residual = detail::parse_bool(key, val);
      else throw std::invalid_argument("config: unknown key '" + key + "' in [detector]");
    } else {  // idd
      if (key == "iterations") spec.idd.n_iterations = static_cast<int>(detail::parse_long(key, val));
      else if (key == "spa_max_iters") spec.idd.spa_max_iters = static_cast<int>(detail::parse_long(key, val));
      else if (key == "swapped_rho_placement") spec.idd.swapped_rho_placement = detail::parse_bool(key, val);
      else throw std::invalid_argument("config: unknown key '" + key + "' in [idd]");
    }
  }
}

inline ExperimentSpec parse_config(const std::string& path) {
  ExperimentSpec spec;
  apply_config_file(spec, path);
  spec.validate();
  return spec;
}

// ---- runner ----

namespace detail {

inline int resolve_workers(int requested) {
  int w = requested > 0 ? requested
                        : static_cast<int>(std::thread::hardware_concurrency());
  if (w < 1) w = 1;
  if (const char* env = std::getenv("MMTC_THREADS")) {
    const int cap = std::atoi(env);
    if (cap > 0) w = std::min(w, cap);
  }
  return w;
}

// Runs fn(trial, local_counts) over trials on a small pool. Counts are
// integers so the reduction is order-independent and results match across
// any worker count.
template <typename Fn>
inline void parallel_trials(long trials, int workers, size_t n_counts,
                            std::vector<long>& counts, Fn&& fn) {
  counts.assign(n_counts, 0);
  std::atomic<long> next{0};
  std::mutex merge_mu;
  std::exception_ptr first_error = nullptr;
  auto body = [&]() {
    std::vector<long> local(n_counts, 0);
    try {
      for (;;) {
        const long t = next.fetch_add(1, std::memory_order_relaxed);
        if (t >= trials || g_interrupted.load(std::memory_order_relaxed)) break;
        fn(t, local);
      }
    } catch (...) {
      next.store(trials, std::memory_order_relaxed);  // stop the other workers
      std::lock_guard<std::mutex> lk(merge_mu);
      if (!first_error) first_error = std::current_exception();
    }
    std::lock_guard<std::mutex> lk(merge_mu);
    for (size_t i = 0; i < n_counts; ++i) counts[i] += local[i];
  };
  const int w = std::max(1, workers);
  std::vector<std::thread> pool;
  for (int i = 1; i < w; ++i) pool.emplace_back(body);
  body();
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

// Symbol errors of a hard-decision block against the transmitted data block;
// every device/instant pair counts, so missed activity and false alarms are
// both errors.
inline long block_symbol_errors(const cmat& hard, const SlotRealization& slot,
                                int tau_phi) {
  long errs = 0;
  for (int t = 0; t < hard.cols(); ++t)
    for (int n = 0; n < hard.rows(); ++n)
      if (hard(n, t) != slot.symbols(n, tau_phi + t)) ++errs;
  return errs;
}

// Bit errors of an uncoded detection pass. Active devices contribute
// 2*tau_x bits each; a zero decision on an active symbol demaps the nearest
// constellation point to the soft estimate, and a device the detector missed
// entirely counts all its bits as errors. False detections carry no bits.
inline std::pair<long, long> uncoded_bit_errors(const SlotRealization& slot,
                                                const DetectionResult& det,
                                                const SystemConfig& cfg) {
  const auto& alphabet = augmented_alphabet();
  long errs = 0, bits = 0;
  for (int n = 0; n < cfg.n_devices; ++n) {
    if (!slot.delta[n]) continue;
    bool seen = false;
    for (int t = 0; t < cfg.tau_x; ++t)
      if (det.d_hard(n, t) != cx(0.0, 0.0)) {
        seen = true;
        break;
      }
    bits += kBitsPerSymbol * cfg.tau_x;
    if (!seen) {
      errs += kBitsPerSymbol * cfg.tau_x;
      continue;
    }
    for (int t = 0; t < cfg.tau_x; ++t) {
      const cx truth = slot.symbols(n, cfg.tau_phi + t);
      const auto [tb0, tb1] = qpsk_demap_hard(truth);
      cx dec = det.d_hard(n, t);
      if (dec == cx(0.0, 0.0))
        dec = alphabet[alphabet.nearest_nonzero(det.d_soft(n, t))];
      const auto [b0, b1] = qpsk_demap_hard(dec);
      errs += (b0 != tb0) + (b1 != tb1);
    }
  }
  return {errs, bits};
}

inline ResultSeries make_series(const std::string& name) {
  ResultSeries s;
  s.name = name;
  return s;
}

constexpr uint64_t kProfileStream = 1000000007ull;
constexpr uint64_t kCodeStream = 1000000009ull;
constexpr uint64_t kUncodedStreamBase = 10000;
constexpr uint64_t kCodedStreamBase = 20000;
constexpr uint64_t kSumrateStreamBase = 2000000000ull;

inline std::vector<ResultSeries> run_uncoded_sweep(const ExperimentSpec& spec) {
  const SystemConfig base = spec.config;
  std::mt19937_64 prof_rng = make_stream(base.seed, kProfileStream, 0);
  const std::vector<DeviceProfile> profiles = make_profiles(base, prof_rng);
  const MetadataCodebook codebook = build_codebook(base.tau_phi);
  const int workers = resolve_workers(spec.workers);
  const bool want_nu = spec.preset == "fig4a";

  std::vector<ResultSeries> series;
  for (const auto& name : spec.detectors) series.push_back(make_series(name));
  if (want_nu) {
    series.clear();
    series.push_back(make_series("aa_vgl_df_nu_internal"));
    series.push_back(make_series("aa_vgl_df_nu_external"));
  }

  for (size_t si = 0; si < spec.snr_grid.size(); ++si) {
    if (g_interrupted.load()) break;
    SystemConfig cfg = base;
    cfg.snr_db = spec.snr_grid[si];
    const double g_x = std::sqrt(static_cast<double>(cfg.tau_x));

    // one integer accumulator per series (errors or reliability flags)
    std::vector<long> counts;
    parallel_trials(
        spec.trials, workers, series.size(), counts,
        [&](long trial, std::vector<long>& local) {
          std::mt19937_64 rng =
              make_stream(cfg.seed, kUncodedStreamBase + si, trial);
          const SlotRealization slot =
              generate_slot(cfg, profiles, codebook, rng);
          const ChannelEstimate est = blind_channel_estimate(
              slot.Y.leftCols(cfg.tau_phi), codebook, slot.assignment,
              profiles, slot.sigma_v2, cfg.tau_phi);
          const cmat Y_data = slot.Y.rightCols(cfg.tau_x);

          if (want_nu) {
            DetectionResult det =
                detect_slot(slot, est.H_hat, profiles, cfg, spec.detector);
            local[0] += det.vartheta.sum();
            local[1] += det.vartheta_ext.sum();
            return;
          }

          cmat H_eff_hat = est.H_hat, H_eff_true = slot.H;
          for (int i = 0; i < cfg.n_devices; ++i) {
            const double s = g_x * std::sqrt(profiles[i].b);
            H_eff_hat.col(i) *= s;
            H_eff_true.col(i) *= s;
          }

          for (size_t d = 0; d < spec.detectors.size(); ++d) {
            const std::string& name = spec.detectors[d];
            cmat hard;
            if (name == "lmmse") {
              hard = lmmse_detect(Y_data, H_eff_hat, slot.sigma_v2).second;
            } else if (name == "oracle_lmmse") {
              hard = oracle_lmmse_detect(Y_data, H_eff_true, slot.delta,
                                         slot.sigma_v2);
            } else if (name == "aa_rls_linear") {
              hard = aa_rls_linear_detect(slot, est.H_hat, profiles, cfg, false)
                         .d_hard;
            } else if (name == "aa_rls_linear_il") {
              hard = aa_rls_linear_detect(slot, est.H_hat, profiles, cfg, true)
                         .d_hard;
            } else if (name == "aa_rls_df") {
              hard = aa_rls_df_detect(slot, est.H_hat, profiles, cfg, false)
                         .d_hard;
            } else if (name == "aa_rls_df_il") {
              hard = aa_rls_df_detect(slot, est.H_hat, profiles, cfg, true)
                         .d_hard;
            } else if (name == "aa_vgl_df") {
              hard = detect_slot(slot, est.H_hat, profiles, cfg, spec.detector)
                         .d_hard;
            } else {
              throw std::invalid_argument("run_experiment: unknown detector '" +
                                          name + "'");
            }
            local[d] += block_symbol_errors(hard, slot, cfg.tau_phi);
          }
        });
    if (g_interrupted.load()) break;

    if (want_nu) {
      const long cells = spec.trials * static_cast<long>(cfg.n_devices) *
                         cfg.tau_x;
      for (int k = 0; k < 2; ++k) {
        auto [lo, hi] = wilson_interval(counts[k], cells);
        series[k].x.push_back(cfg.snr_db);
        series[k].y.push_back(static_cast<double>(counts[k]) /
                              (spec.trials * static_cast<double>(cfg.tau_x)));
        series[k].ci_low.push_back(lo * cfg.n_devices);
        series[k].ci_high.push_back(hi * cfg.n_devices);
        series[k].trials.push_back(spec.trials);
      }
    } else {
      const long cells = spec.trials * static_cast<long>(cfg.n_devices) *
                         cfg.tau_x;
      for (size_t d = 0; d < series.size(); ++d) {
        auto [lo, hi] = wilson_interval(counts[d], cells);
        series[d].x.push_back(cfg.snr_db);
        series[d].y.push_back(static_cast<double>(counts[d]) / cells);
        series[d].ci_low.push_back(lo);
        series[d].ci_high.push_back(hi);
        series[d].trials.push_back(spec.trials);
      }
    }
  }
  return series;
}

inline std::vector<ResultSeries> run_coded_sweep(const ExperimentSpec& spec) {
  const SystemConfig base = spec.config;
  std::mt19937_64 prof_rng = make_stream(base.seed, kProfileStream, 0);
  const std::vector<DeviceProfile> profiles = make_profiles(base, prof_rng);
  const MetadataCodebook codebook = build_codebook(base.tau_phi);
  const int workers = resolve_workers(spec.workers);

  const int code_bits = kBitsPerSymbol * base.tau_x * spec.slots_per_frame;
  std::mt19937_64 code_rng = make_stream(base.seed, kCodeStream, 0);
  const LdpcCode code = build_ldpc(code_bits, code_bits / 2, 3, code_rng);

  // uncoded comparator runs the short-block geometry at unit rate factor
  SystemConfig unc = base;
  unc.tau_x = 8;
  unc.rate_factor = 1.0;

  const int iters = spec.idd.n_iterations;
  std::vector<ResultSeries> series;
  for (int i = 1; i <= iters; ++i)
    series.push_back(make_series("aa_vgl_df_idd_iter" + std::to_string(i)));
  series.push_back(make_series("aa_vgl_df_uncoded_ber"));

  for (size_t si = 0; si < spec.snr_grid.size(); ++si) {
    if (g_interrupted.load()) break;
    SystemConfig cfg = base, ucfg = unc;
    cfg.snr_db = spec.snr_grid[si];
    ucfg.snr_db = spec.snr_grid[si];

    // layout: per-iteration error counts, coded bits, uncoded errors, bits
    const size_t n_counts = static_cast<size_t>(iters) + 3;
    std::vector<long> counts;
    parallel_trials(
        spec.trials, workers, n_counts, counts,
        [&](long trial, std::vector<long>& local) {
          std::mt19937_64 rng =
              make_stream(cfg.seed, kCodedStreamBase + si, trial);
          const CodedFrame frame = make_coded_frame(
              cfg, profiles, codebook, code, spec.slots_per_frame, rng);
          const IddResult idd = idd_loop(frame, profiles, codebook, code, cfg,
                                         spec.detector, spec.idd);
          for (int i = 0; i < iters; ++i) local[i] += idd.bit_errors[i];
          local[iters] += idd.info_bits_total;

          std::mt19937_64 urng =
              make_stream(cfg.seed, kUncodedStreamBase + si, trial);
          const SlotRealization slot =
              generate_slot(ucfg, profiles, codebook, urng);
          const ChannelEstimate est = blind_channel_estimate(
              slot.Y.leftCols(ucfg.tau_phi), codebook, slot.assignment,
              profiles, slot.sigma_v2, ucfg.tau_phi);
          const DetectionResult det =
              detect_slot(slot, est.H_hat, profiles, ucfg, spec.detector);
          auto [errs, bits] = uncoded_bit_errors(slot, det, ucfg);
          local[iters + 1] += errs;
          local[iters + 2] += bits;
        });
    if (g_interrupted.load()) break;

    const long coded_bits = counts[iters];
    for (int i = 0; i < iters; ++i) {
      auto [lo, hi] = wilson_interval(counts[i], coded_bits);
      series[i].x.push_back(cfg.snr_db);
      series[i].y.push_back(coded_bits > 0
                                ? static_cast<double>(counts[i]) / coded_bits
                                : 0.0);
      series[i].ci_low.push_back(lo);
      series[i].ci_high.push_back(hi);
      series[i].trials.push_back(spec.trials);
    }
    auto [lo, hi] = wilson_interval(counts[iters + 1], counts[iters + 2]);
    series[iters].x.push_back(cfg.snr_db);
    series[iters].y.push_back(
        counts[iters + 2] > 0
            ? static_cast<double>(counts[iters + 1]) / counts[iters + 2]
            : 0.0);
    series[iters].ci_low.push_back(lo);
    series[iters].ci_high.push_back(hi);
    series[iters].trials.push_back(spec.trials);
  }
  return series;
}

inline std::vector<ResultSeries> run_sumrate_sweep(const ExperimentSpec& spec) {
  std::vector<ResultSeries> series;
  struct Item {
    std::string name;
    double alpha, beta;
    SumRateFilter filter;
  };
  std::vector<Item> items;
  if (spec.preset == "fig8") {
    items = {{"sumrate_a1_b9", 1.0, 9.0, SumRateFilter::kLmmseImperfect},
             {"sumrate_a4_b8", 4.0, 8.0, SumRateFilter::kLmmseImperfect},
             {"sumrate_a6_b6", 6.0, 6.0, SumRateFilter::kLmmseImperfect}};
  } else {
    items = {{"sumrate_lmmse_perfect", spec.config.alpha, spec.config.beta,
              SumRateFilter::kLmmsePerfect},
             {"sumrate_lmmse_imperfect", spec.config.alpha, spec.config.beta,
              SumRateFilter::kLmmseImperfect},
             {"sumrate_aa_vgl_df", spec.config.alpha, spec.config.beta,
              SumRateFilter::kAavgl}};
  }

  for (size_t it = 0; it < items.size(); ++it) {
    ResultSeries s = make_series(items[it].name);
    for (size_t si = 0; si < spec.snr_grid.size(); ++si) {
      if (g_interrupted.load()) break;
      SystemConfig cfg = spec.config;
      cfg.snr_db = spec.snr_grid[si];
      cfg.alpha = items[it].alpha;
      cfg.beta = items[it].beta;
      std::mt19937_64 rng =
          make_stream(cfg.seed, kSumrateStreamBase + it * 4096 + si, 0);
      RateReport rep = sum_rate(cfg, items[it].filter, cfg.n_devices,
                                spec.sumrate_mc_samples, rng);
      s.x.push_back(cfg.snr_db);
      s.y.push_back(rep.rate);
      s.ci_low.push_back(rep.rate);
      s.ci_high.push_back(rep.rate);
      s.trials.push_back(rep.mc_samples);
    }
    series.push_back(std::move(s));
  }
  return series;
}

inline std::vector<ResultSeries> run_flops_sweep(const ExperimentSpec& spec) {
  const int m = 20;
  std::vector<ResultSeries> series;
  for (const auto& name : spec.detectors) {
    Algorithm alg;
    if (name == "lmmse") alg = Algorithm::kLmmse;
    else if (name == "sa_sic") alg = Algorithm::kSaSic;
    else if (name == "sa_sic_asqrd") alg = Algorithm::kSaSicAsqrd;
    else if (name == "aa_rls_linear") alg = Algorithm::kAaRlsLinear;
    else if (name == "aa_rls_linear_il") alg = Algorithm::kAaRlsLinearIl;
    else if (name == "aa_rls_df") alg = Algorithm::kAaRlsDf;
    else if (name == "aa_rls_df_il") alg = Algorithm::kAaRlsDfIl;
    else if (name == "aa_vgl_df") alg = Algorithm::kAaVglDf;
    else throw std::invalid_argument("run_experiment: unknown algorithm '" +
                                     name + "'");
    ResultSeries s = make_series("flops_" + name);
    for (double nd : spec.snr_grid) {  // grid doubles as the device-count axis
      const int n = static_cast<int>(nd);
      std::vector<int> vartheta(n, 0);
      for (int i = 0; i < n / 4; ++i) vartheta[i] = 1;  // 25% unreliable
      const long long g_ext = 5;
      const double flops = static_cast<double>(
          flop_count(alg, m, n, augmented_alphabet().size(), vartheta, g_ext));
      s.x.push_back(nd);
      s.y.push_back(flops);
      s.ci_low.push_back(flops);
      s.ci_high.push_back(flops);
      s.trials.push_back(1);
    }
    series.push_back(std::move(s));
  }
  return series;
}

}  // namespace detail

// Runs the experiment described by spec and writes one CSV per series into
// spec.out_dir. Completed SNR points are flushed even when interrupted.
inline std::vector<ResultSeries> run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  std::vector<ResultSeries> series;
  if (spec.preset == "fig5") series = detail::run_flops_sweep(spec);
  else if (spec.preset == "fig7") series = detail::run_coded_sweep(spec);
  else if (spec.preset == "fig8" || spec.preset == "fig9")
    series = detail::run_sumrate_sweep(spec);
  else series = detail::run_uncoded_sweep(spec);
  write_experiment_csvs(series, spec.out_dir);
  return series;
}

}  // namespace mmtc
