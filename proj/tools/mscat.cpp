// Command-line front end for imaging experiments and diagnostics.

#include "mscat/mscat.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace mscat;

namespace {

struct CommonOptions {
  std::string config_path;
  std::string out_dir;
  std::string method;
  std::string illumination;
  std::optional<double> noise;
};

ExperimentConfig resolve_config(const CommonOptions& o) {
  ExperimentConfig c = o.config_path.empty() ? ExperimentConfig{} : load_config(o.config_path);
  if (!o.out_dir.empty()) c.output_dir = o.out_dir;
  if (!o.method.empty()) c.method = parse_method(o.method);
  if (!o.illumination.empty()) {
    c.illumination = parse_illumination(o.illumination);
    // Several shots on the command line imply joint recovery unless a method was named.
    if (o.method.empty() && c.method == Method::Smv && c.illumination.mode != IlluminationMode::Point &&
        c.illumination.value > 1)
      c.method = Method::Mmv;
  }
  if (o.noise) c.noise_pct = *o.noise;
  validate(c);
  return c;
}

void add_common(CLI::App* cmd, CommonOptions& o, bool with_method) {
  cmd->add_option("--config", o.config_path, "experiment config file")->check(CLI::ExistingFile);
  cmd->add_option("--out", o.out_dir, "output directory");
  cmd->add_option("--illum", o.illumination, "point:s | random:nu | optimal:nu");
  cmd->add_option("--noise", o.noise, "noise level in percent");
  if (with_method) cmd->add_option("--method", o.method, "smv | mmv | music");
}

template <typename Writer>
void write_file(const fs::path& path, Writer&& w) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  w(out);
}

int synthesize(const ExperimentConfig& c) {
  const ArrayGeometry geom = make_geometry(c);
  const ImageWindow iw = make_window(c);
  const ScattererScene scene = make_scene(c);
  const ResponseMatrix p = response_matrix(scene, geom, iw);
  const Index n = geom.size();
  DataMatrix data;
  const std::uint64_t noise_seed = derive_seed(c.seed, kNoiseStream);
  if (c.illumination.mode == IlluminationMode::Optimal) {
    const ResponseMatrix pm = c.noise_pct > 0.0 ? measure_response_matrix(p, c.noise_pct, noise_seed) : p;
    data = optimal_data_matrix(pm, p, std::min(c.illumination.value, n));
  } else {
    auto shots = c.illumination.mode == IlluminationMode::Point
                     ? std::vector<Illumination>{point_illumination(c.illumination.value - 1, n)}
                     : random_illuminations(c.illumination.value, n, derive_seed(c.seed, kShotStream));
    data = build_data_matrix(p, std::move(shots), c.noise_pct, noise_seed);
  }
  const fs::path dir(c.output_dir);
  fs::create_directories(dir);
  write_file(dir / "scene.csv", [&](std::ostream& o) { write_scene_csv(o, scene); });
  write_file(dir / "response.csv", [&](std::ostream& o) { write_complex_csv(o, p.matrix()); });
  write_file(dir / "data.csv", [&](std::ostream& o) { write_complex_csv(o, data.B); });
  write_file(dir / "illuminations.csv", [&](std::ostream& o) { write_illuminations_csv(o, data.illuminations); });
  std::cout << "sensors = " << n << "\nunknowns = " << iw.size() << "\nscatterers = " << scene.count()
            << "\nmultiple_scattering_pct = " << multiple_scattering_amount(scene, geom, iw)
            << "\nsymmetry_defect = " << p.symmetry_defect() << "\nnoise_energy = " << data.noise_energy << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Array imaging of point scatterers with multiple scattering"};
  app.require_subcommand(1);

  CommonOptions syn_opts, img_opts, cmp_opts;
  auto* syn = app.add_subcommand("synthesize", "simulate the response matrix and array data");
  add_common(syn, syn_opts, false);

  auto* img = app.add_subcommand("image", "run an imaging experiment and write its report");
  add_common(img, img_opts, true);
  std::string trace_path;
  img->add_option("--trace", trace_path, "write per-iteration solver diagnostics to this CSV file");

  auto* cmp = app.add_subcommand("compare", "compare imaging methods on one configuration");
  add_common(cmp, cmp_opts, false);
  std::vector<std::string> methods = {"smv", "mmv-random", "mmv-optimal", "music"};
  cmp->add_option("--methods", methods, "methods to compare")->delimiter(',');

  auto* coh = app.add_subcommand("coherence", "normalized inner products for large arrays");
  std::string array = "spherical", orientation = "perpendicular", coh_out;
  double radius = 100.0, aperture = 1600.0, distance = 160.0, pitch = 0.5, from = 5.0, to = 20.0, step = 0.25;
  coh->add_option("--array", array, "planar | spherical")->check(CLI::IsMember({"planar", "spherical"}));
  coh->add_option("--orientation", orientation, "planar pair orientation: parallel | perpendicular")
      ->check(CLI::IsMember({"parallel", "perpendicular"}));
  coh->add_option("--radius", radius, "spherical array radius");
  coh->add_option("--aperture", aperture, "planar array diameter");
  coh->add_option("--distance", distance, "planar array distance");
  coh->add_option("--pitch", pitch, "sensor spacing");
  coh->add_option("--from", from, "first separation");
  coh->add_option("--to", to, "last separation");
  coh->add_option("--step", step, "separation step");
  coh->add_option("--out", coh_out, "CSV file (default: stdout)");

  auto* bnd = app.add_subcommand("bounds", "coherence-based recovery bounds");
  std::string bnd_config;
  std::optional<double> epsilon, noise_energy;
  std::optional<Index> sparsity;
  bnd->add_option("--config", bnd_config, "take coherence and sparsity from this config")->check(CLI::ExistingFile);
  bnd->add_option("--epsilon", epsilon, "mutual coherence");
  bnd->add_option("--sparsity", sparsity, "number of scatterers M");
  bnd->add_option("--noise-energy", noise_energy, "Frobenius norm of the noise");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*syn) return synthesize(resolve_config(syn_opts));

    if (*img) {
      const ExperimentConfig c = resolve_config(img_opts);
      std::ofstream trace;
      std::function<void(const IterationRecord&)> cb;
      if (!trace_path.empty()) {
        trace.open(trace_path);
        if (!trace) throw Error("cannot write " + trace_path);
        trace << "iter,residual,j21\n";
        trace.precision(17);
        cb = [&trace](const IterationRecord& r) { trace << r.iteration << ',' << r.residual << ',' << r.j21 << '\n'; };
      }
      const ExperimentResult r = run_experiment(c, cb);
      write_summary(std::cout, r);
      std::cout << "runtime_s = " << r.runtime_seconds << '\n';
      return 0;
    }

    if (*cmp) {
      const ExperimentConfig c = resolve_config(cmp_opts);
      const auto rows = compare_methods(c, methods);
      write_comparison_csv(std::cout, rows);
      if (!cmp_opts.out_dir.empty()) {
        fs::create_directories(c.output_dir);
        write_file(fs::path(c.output_dir) / "comparison.csv", [&](std::ostream& o) { write_comparison_csv(o, rows); });
      }
      return 0;
    }

    if (*coh) {
      const auto seps = separation_sweep(from, to, step);
      const CoherenceCurve curve = array == "spherical"
                                       ? spherical_coherence_curve(radius, pitch, seps)
                                       : planar_coherence_curve(aperture, distance, pitch, seps,
                                                                orientation == "parallel" ? Orientation::Parallel
                                                                                          : Orientation::Perpendicular);
      if (coh_out.empty()) {
        write_curve_csv(std::cout, curve);
      } else {
        write_file(coh_out, [&](std::ostream& o) { write_curve_csv(o, curve); });
      }
      if (array == "planar" && orientation == "perpendicular") {
        const LogLogFit fit = envelope_fit(curve.separations, curve.measured);
        std::cerr << curve.geometry << ": envelope slope " << fit.slope << " over " << fit.points << " maxima\n";
      }
      return 0;
    }

    if (*bnd) {
      double eps = epsilon.value_or(0.0);
      Index m = sparsity.value_or(1);
      if (!bnd_config.empty()) {
        const ExperimentConfig c = load_config(bnd_config);
        if (!epsilon) eps = mutual_coherence(build_sensing_matrix(make_geometry(c), make_window(c), true));
        if (!sparsity) m = static_cast<Index>(c.scatterers.size());
      }
      const TheoryBounds t = theory_bounds(std::min(eps, 1.0 - 1e-16), m, noise_energy.value_or(0.0));
      std::cout.precision(10);
      std::cout << "epsilon = " << t.epsilon << "\nsparsity = " << t.sparsity << "\nM*epsilon = "
                << static_cast<double>(t.sparsity) * t.epsilon << "\nstatus = " << t.status()
                << "\ndelta_min = " << t.delta_min << "\nerror_bound = " << t.err_bound << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
