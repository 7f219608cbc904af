#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "dfetrack/adamax.hpp"
#include "dfetrack/cae.hpp"
#include "dfetrack/raster.hpp"

namespace dfetrack::cae {

struct TrainOptions {
  int epochs = 1;  // total epochs, counting those already done on resume
  int batch_size = 32;
  AdamaxParams optimizer;
  int checkpoint_every = 0;  // epochs between checkpoints; 0 disables
  std::filesystem::path checkpoint_path;
  std::function<void(int epoch, double mse)> on_epoch;
  std::function<void(std::int64_t step, double loss)> on_step;
};

struct TrainState {
  CaeModel model;
  OptimizerState optimizer;
  std::uint64_t shuffle_seed = 0;
  int epochs_done = 0;
  std::vector<double> loss_curve;  // training MSE per finished epoch
};

TrainState initial_state(const CaeConfig& config, const AdamaxParams& optimizer = {});

// Fresh run: initialisation and per-epoch shuffles both derive from
// config.seed.
TrainState train(const CaeConfig& config, std::span<const PlanarImage> crops, const TrainOptions& options);

// Runs epochs epochs_done + 1 .. options.epochs on `state`. A state restored
// from a checkpoint continues bit-identically to the uninterrupted run.
void continue_training(TrainState& state, std::span<const PlanarImage> crops, const TrainOptions& options);

// "DFECKP01", u64 header length, JSON header, then float64 little-endian
// parameters, first moments, and infinity norms.
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);

inline constexpr char kCheckpointMagic[] = "DFECKP01";

// "epoch,mse" rows, epochs counted from 1.
void write_loss_curve_csv(std::span<const double> curve, const std::filesystem::path& path);

}  // namespace dfetrack::cae
