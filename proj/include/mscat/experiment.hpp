#pragma once

// End-to-end imaging experiments: synthesize, recover, score and write reports.

#include "mscat/coherence_lab.hpp"
#include "mscat/config.hpp"
#include "mscat/forward.hpp"
#include "mscat/illumination.hpp"
#include "mscat/music.hpp"
#include "mscat/reflectivity.hpp"
#include "mscat/sparse_recovery.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>

namespace mscat {

// Independent RNG streams derived from the master seed.
inline constexpr std::uint64_t kNoiseStream = 1;
inline constexpr std::uint64_t kShotStream = 2;

inline ScattererScene make_scene(const ExperimentConfig& c) {
  return ScattererScene::with_random_phases(c.nx * c.ny, c.scatterers, c.amplitudes, c.phase_seed);
}

struct ExperimentResult {
  ExperimentConfig config;
  ScattererScene scene{ComplexVector()};
  IndexSet support;
  /// Recovered reflectivities on `support` (NaN for MUSIC).
  ComplexVector rho;
  std::vector<bool> screened;
  /// Normalized row norms of the effective sources, or the MUSIC pseudospectrum.
  RealVector image;
  RealVector singular_values;
  double coherence = 0.0;
  double ms_amount = 0.0;
  TheoryBounds bounds;
  double noise_energy = 0.0;
  Index iterations = 0;
  bool converged = true;
  double residual = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  /// Largest and mean relative reflectivity error over correctly detected pixels.
  double rho_max_error = std::numeric_limits<double>::quiet_NaN();
  double rho_mean_error = std::numeric_limits<double>::quiet_NaN();
  double runtime_seconds = 0.0;
};

inline void score(ExperimentResult& r) {
  const IndexSet& truth = r.scene.support();
  Index hits = 0;
  double max_err = 0.0, sum_err = 0.0;
  Index scored = 0;
  for (std::size_t i = 0; i < r.support.size(); ++i) {
    const Index k = r.support[i];
    if (!std::binary_search(truth.begin(), truth.end(), k)) continue;
    ++hits;
    if (r.rho.size() == static_cast<Index>(r.support.size()) && std::isfinite(r.rho(static_cast<Index>(i)).real())) {
      const Complex t = r.scene.rho0()(k);
      const double e = std::abs(r.rho(static_cast<Index>(i)) - t) / std::abs(t);
      max_err = std::max(max_err, e);
      sum_err += e;
      ++scored;
    }
  }
  r.precision = r.support.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(r.support.size());
  r.recall = static_cast<double>(hits) / static_cast<double>(truth.size());
  if (scored) {
    r.rho_max_error = max_err;
    r.rho_mean_error = sum_err / static_cast<double>(scored);
  }
}

/// Runs the configured pipeline without touching the filesystem. `on_iteration` receives
/// GeLMA progress records.
inline ExperimentResult run_pipeline(const ExperimentConfig& config,
                                     const std::function<void(const IterationRecord&)>& on_iteration = {}) {
  validate(config);
  const auto start = std::chrono::steady_clock::now();
  ExperimentResult r;
  r.config = config;
  const ArrayGeometry geom = make_geometry(config);
  const ImageWindow iw = make_window(config);
  const SensingMatrix physical = build_sensing_matrix(geom, iw, false);
  const SensingMatrix s = physical.normalized_copy();
  r.scene = make_scene(config);
  const ResponseMatrix p = response_matrix(r.scene, geom, iw);
  r.coherence = iw.size() >= 2 ? mutual_coherence(s) : 0.0;
  r.ms_amount = multiple_scattering_amount(r.scene, geom, iw);

  const Index n = geom.size();
  const double noise = config.noise_pct;
  const std::uint64_t noise_seed = derive_seed(config.seed, kNoiseStream);
  auto measured = [&]() { return noise > 0.0 ? measure_response_matrix(p, noise, noise_seed) : p; };

  if (config.method == Method::Music) {
    const ResponseMatrix pm = measured();
    const MusicImage img = music_image(pm, iw, geom, std::min(config.music_vectors, n));
    r.image = img.values;
    r.singular_values = pm.svd().sigma;
    r.support = top_peaks(img.values, iw, r.scene.count());
    r.rho = ComplexVector::Constant(static_cast<Index>(r.support.size()), Complex(std::numeric_limits<double>::quiet_NaN(), 0.0));
    r.screened.assign(r.support.size(), false);
    r.bounds = theory_bounds(std::min(r.coherence, 1.0 - 1e-16), r.scene.count(), 0.0);
  } else {
    DataMatrix data;
    const IlluminationSpec& il = config.illumination;
    if (il.mode == IlluminationMode::Optimal) {
      const ResponseMatrix pm = measured();
      data = optimal_data_matrix(pm, p, std::min(il.value, n));
      r.singular_values = pm.svd().sigma;
    } else {
      std::vector<Illumination> shots = il.mode == IlluminationMode::Point
                                            ? std::vector<Illumination>{point_illumination(il.value - 1, n)}
                                            : random_illuminations(il.value, n, derive_seed(config.seed, kShotStream));
      data = build_data_matrix(p, std::move(shots), noise, noise_seed);
      r.singular_values = p.svd().sigma;
    }
    r.noise_energy = data.noise_energy;

    SolverSettings settings;
    settings.tau_scale = config.tau_scale;
    settings.max_iters = config.max_iters;
    settings.tolerance = config.tolerance;
    settings.support_fraction = config.support_fraction;
    settings.delta = data.noise_energy;
    settings.on_iteration = on_iteration;
    EffectiveSourceSolution sol = gelma_solve(s, data.B, settings);
    r.bounds = theory_bounds(std::min(r.coherence, 1.0 - 1e-16), r.scene.count(), data.noise_energy);
    sol.support = extract_support(sol, r.bounds, config.support_fraction);
    const ReflectivityEstimate est = recover_reflectivities(sol, physical, iw, data.illuminations);
    r.support = est.support;
    r.rho = est.rho;
    for (std::size_t i = 0; i < est.support.size(); ++i) r.screened.push_back(est.screened(static_cast<Index>(i)));
    r.image = sol.row_norms;
    r.iterations = sol.iterations;
    r.converged = sol.converged;
    r.residual = sol.residual;
  }
  score(r);
  r.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

namespace detail {

/// Writes through a temporary file and renames it into place.
template <typename Writer>
void write_atomically(const std::filesystem::path& path, Writer&& writer, std::ios::openmode mode = std::ios::out) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, mode | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    writer(out);
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace detail

/// nx x ny values as CSV, one image row per line.
inline void write_grid_csv(std::ostream& out, const RealVector& values, const ImageWindow& iw) {
  out.precision(17);
  for (Index row = 0; row < iw.ny(); ++row) {
    for (Index col = 0; col < iw.nx(); ++col) {
      if (col) out << ',';
      out << values(iw.index(row, col));
    }
    out << '\n';
  }
}

/// Binary 8-bit PGM, values mapped linearly from [0, max] to [0, 255].
inline void write_pgm(std::ostream& out, const RealVector& values, const ImageWindow& iw) {
  out << "P5\n" << iw.nx() << ' ' << iw.ny() << "\n255\n";
  const double mx = values.size() ? values.maxCoeff() : 0.0;
  for (Index k = 0; k < iw.size(); ++k) {
    const double v = mx > 0.0 ? std::clamp(values(k) / mx, 0.0, 1.0) : 0.0;
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * v))));
  }
}

inline void write_summary(std::ostream& out, const ExperimentResult& r) {
  auto idx = [](const IndexSet& s) {
    std::string o;
    for (std::size_t i = 0; i < s.size(); ++i) o += (i ? "," : "") + std::to_string(s[i] + 1);
    return o;
  };
  out.precision(10);
  out << "method = " << to_string(r.config.method) << '\n'
      << "illumination = " << to_string(r.config.illumination) << '\n'
      << "noise_pct = " << r.config.noise_pct << '\n'
      << "sensors = " << make_geometry(r.config).size() << '\n'
      << "unknowns = " << r.config.nx * r.config.ny << '\n'
      << "mutual_coherence = " << r.coherence << '\n'
      << "multiple_scattering_pct = " << r.ms_amount << '\n'
      << "theory = " << r.bounds.status() << '\n'
      << "delta_min = " << r.bounds.delta_min << '\n'
      << "noise_energy = " << r.noise_energy << '\n'
      << "true_support = " << idx(r.scene.support()) << '\n'
      << "recovered_support = " << idx(r.support) << '\n'
      << "precision = " << r.precision << '\n'
      << "recall = " << r.recall << '\n'
      << "rho_max_rel_error = " << r.rho_max_error << '\n'
      << "iterations = " << r.iterations << '\n'
      << "converged = " << (r.converged ? "yes" : "no") << '\n'
      << "residual = " << r.residual << '\n';
}

/// Writes the report files under config.output_dir (created if needed).
inline void write_report(const ExperimentResult& r) {
  namespace fs = std::filesystem;
  const fs::path dir(r.config.output_dir);
  fs::create_directories(dir);
  const ImageWindow iw = make_window(r.config);
  detail::write_atomically(dir / "config.ini", [&](std::ostream& o) { write_config(o, r.config); });
  detail::write_atomically(dir / "summary.txt", [&](std::ostream& o) { write_summary(o, r); });
  detail::write_atomically(dir / "image.csv", [&](std::ostream& o) { write_grid_csv(o, r.image, iw); });
  detail::write_atomically(dir / "image.pgm", [&](std::ostream& o) { write_pgm(o, r.image, iw); }, std::ios::out | std::ios::binary);
  detail::write_atomically(dir / "scene.csv", [&](std::ostream& o) { write_scene_csv(o, r.scene); });
  detail::write_atomically(dir / "singular_values.csv", [&](std::ostream& o) {
    o << "index,sigma\n";
    o.precision(17);
    for (Index j = 0; j < r.singular_values.size(); ++j) o << (j + 1) << ',' << r.singular_values(j) << '\n';
  });
  detail::write_atomically(dir / "recovered.csv", [&](std::ostream& o) {
    o << "grid_index,x,y,re,im,abs,screened\n";
    o.precision(17);
    for (std::size_t i = 0; i < r.support.size(); ++i) {
      const Index k = r.support[i];
      const Complex v = r.rho(static_cast<Index>(i));
      o << (k + 1) << ',' << iw.offset_u(k) << ',' << iw.offset_v(k) << ',' << v.real() << ',' << v.imag() << ','
        << std::abs(v) << ',' << (r.screened[i] ? 1 : 0) << '\n';
    }
  });
}

inline ExperimentResult run_experiment(const ExperimentConfig& config,
                                       const std::function<void(const IterationRecord&)>& on_iteration = {}) {
  ExperimentResult r = run_pipeline(config, on_iteration);
  write_report(r);
  return r;
}

/// Realizations with phase seed and master seed both set to first_seed + i.
inline std::vector<ExperimentResult> run_seed_sweep(const ExperimentConfig& base, std::uint64_t first_seed, Index count,
                                                    unsigned threads = sweep_threads()) {
  std::vector<ExperimentResult> out(static_cast<std::size_t>(count));
  parallel_for(count, threads, [&](Index i) {
    ExperimentConfig c = base;
    c.seed = c.phase_seed = first_seed + static_cast<std::uint64_t>(i);
    out[static_cast<std::size_t>(i)] = run_pipeline(c);
  });
  return out;
}

struct ComparisonRow {
  std::string method;
  double precision = 0.0;
  double recall = 0.0;
  double rho_error = std::numeric_limits<double>::quiet_NaN();
  double runtime_seconds = 0.0;
};

/// Methods: smv, mmv-random, mmv-optimal, music. Multi-shot methods use the configured shot
/// count when the config names one, otherwise the number of scatterers.
inline std::vector<ComparisonRow> compare_methods(const ExperimentConfig& config, const std::vector<std::string>& methods) {
  validate(config);
  const Index n = make_geometry(config).size();
  const Index shots = config.illumination.mode == IlluminationMode::Point ? static_cast<Index>(config.scatterers.size())
                                                                            : config.illumination.value;
  std::vector<ComparisonRow> rows;
  for (const std::string& m : methods) {
    ExperimentConfig c = config;
    if (m == "smv") {
      c.method = Method::Smv;
      if (c.illumination.mode != IlluminationMode::Point) c.illumination = {IlluminationMode::Point, n / 2 + 1};
    } else if (m == "mmv-random") {
      c.method = Method::Mmv;
      c.illumination = {IlluminationMode::Random, shots};
    } else if (m == "mmv-optimal") {
      c.method = Method::Mmv;
      c.illumination = {IlluminationMode::Optimal, shots};
    } else if (m == "music") {
      c.method = Method::Music;
    } else {
      throw ConfigError("methods", "unknown method '" + m + "' (smv, mmv-random, mmv-optimal, music)");
    }
    const ExperimentResult r = run_pipeline(c);
    rows.push_back({m, r.precision, r.recall, r.rho_mean_error, r.runtime_seconds});
  }
  return rows;
}

inline void write_comparison_csv(std::ostream& out, const std::vector<ComparisonRow>& rows) {
  out << "method,precision,recall,rho_rel_error,runtime_s\n";
  out.precision(10);
  for (const auto& r : rows)
    out << r.method << ',' << r.precision << ',' << r.recall << ',' << r.rho_error << ',' << r.runtime_seconds << '\n';
}

}  // namespace mscat
