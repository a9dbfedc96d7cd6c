#ifndef RRECON_PIPELINE_HPP
#define RRECON_PIPELINE_HPP

// In-memory pipeline stages shared by the CLI commands and the integration tests.

#include <optional>
#include <vector>

#include "rrecon/acquisition.hpp"
#include "rrecon/config.hpp"
#include "rrecon/metrics.hpp"
#include "rrecon/model.hpp"
#include "rrecon/preprocess.hpp"
#include "rrecon/solvers.hpp"

namespace rrecon {

struct SimulationData {
  SystemMatrix system;        // noise-free forward operator
  Phantom phantom;
  BackgroundModel background;
  CalibrationSchedule schedule;
  SpectrumSet calibration;    // raw calibration scans, one per voxel
  EmptyScanSet empties;
  Measurement measurement;
};

inline Phantom pipeline_phantom(const PipelineConfig& cfg) {
  return make_phantom(cfg.phantom.kind, cfg.grid(), cfg.phantom.concentration, std::nullopt, cfg.phantom.subsamples);
}

/// Forward operator, phantom and every noisy acquisition, deterministic given the config.
/// The forward operator can be passed in to skip its (seed-independent) simulation.
inline SimulationData simulate(const PipelineConfig& cfg, const SystemMatrix* precomputed = nullptr) {
  cfg.validate();
  SimulationData d;
  const VoxelGrid grid = cfg.grid();
  d.system = precomputed != nullptr ? *precomputed : simulate_system_matrix(cfg.scanner.physics, grid);
  if (!(d.system.grid == grid)) throw ConfigError("simulate: precomputed system matrix grid differs from config");
  d.phantom = pipeline_phantom(cfg);
  const ScannerConfig& sc = cfg.scanner.physics;
  const auto candidates = band_pass(sc.freq_count(), sc.period_ms, cfg.preprocess.b1, cfg.preprocess.b2);
  d.background = make_background(sc, cfg.background.params, candidates);
  d.schedule = make_calibration_schedule(grid.size(), cfg.preprocess.k_empty);

  const std::uint64_t seed = cfg.background.params.seed;
  d.empties = draw_empty_scans(d.background, cfg.preprocess.k_empty, seed, d.schedule.empty_positions);
  d.calibration = draw_calibration_scans(d.system, d.background, cfg.phantom.calibration_concentration,
                                         d.schedule.calibration_positions, seed);
  double mid = 0.0;
  for (double p : d.schedule.empty_positions) mid += p;
  mid /= static_cast<double>(d.schedule.empty_positions.size());
  d.measurement = draw_phantom_measurement(d.system, d.phantom, d.background, seed, mid);
  return d;
}

struct PreprocessResult {
  SystemMatrix calibrated;
  FrequencySelection selection;
  ReducedSystem system;
};

/// Drift-interpolated background correction of the calibration scans, SNR-type selection,
/// background subtraction of the measurement, optional whitening, unit-norm scaling.
inline PreprocessResult preprocess(const PipelineConfig& cfg, const SpectrumSet& calibration,
                                   const EmptyScanSet& empties, const ComplexVector& measurement) {
  const VoxelGrid grid = cfg.grid();
  const CalibrationSchedule schedule = make_calibration_schedule(calibration.count(), empties.size());
  const SpectrumSet backgrounds = interp_backgrounds(empties, calibration.count(), schedule.per_bracket);

  PreprocessResult r;
  r.calibrated = calibrate_system_matrix(calibration, backgrounds, cfg.phantom.calibration_concentration, grid);
  const auto band = band_pass(calibration.freq_count, cfg.scanner.physics.period_ms, cfg.preprocess.b1, cfg.preprocess.b2);
  r.selection = select_frequencies(snr_scores(calibration, backgrounds, empties, band), cfg.preprocess.tau);
  const ComplexVector y = subtract_background(measurement, background_mean(empties));
  std::optional<WhiteningWeights> weights;
  if (cfg.preprocess.whiten) weights = whitening_weights(empties, r.selection, cfg.preprocess.whitening_floor);
  r.system = assemble_reduced_system(r.calibrated, y, r.selection, weights);
  return r;
}

inline PreprocessResult preprocess(const PipelineConfig& cfg, const SimulationData& sim) {
  return preprocess(cfg, sim.calibration, sim.empties, sim.measurement.spectrum);
}

inline SolverResult reconstruct(const PipelineConfig& cfg, const ReducedSystem& system) {
  return reconstruct(cfg.solver.method, system, cfg.solver.alpha, cfg.solver.epsilon, cfg.solver.cfg);
}

inline ReferenceBank pipeline_references(const PipelineConfig& cfg, const Phantom& phantom) {
  return make_reference_bank(phantom.support, phantom.grid, cfg.shift_grid(), cfg.phantom.concentration,
                             cfg.metrics.subsamples);
}

}  // namespace rrecon

#endif  // RRECON_PIPELINE_HPP
