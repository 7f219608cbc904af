#include "dfetrack/trainer.hpp"

#include <fmt/format.h>

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>

#include "dfetrack/error.hpp"
#include "dfetrack/trainpipe.hpp"

namespace dfetrack::cae {
namespace {

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

void put_doubles(std::string& out, const std::vector<double>& values) {
  for (double v : values) put_u64(out, std::bit_cast<std::uint64_t>(v));
}

}  // namespace

TrainState initial_state(const CaeConfig& config, const AdamaxParams& optimizer) {
  TrainState s;
  s.model = CaeModel(config);
  s.optimizer = OptimizerState::for_model(s.model, optimizer);
  s.shuffle_seed = config.seed;
  return s;
}

TrainState train(const CaeConfig& config, std::span<const PlanarImage> crops, const TrainOptions& options) {
  TrainState s = initial_state(config, options.optimizer);
  continue_training(s, crops, options);
  return s;
}

void continue_training(TrainState& state, std::span<const PlanarImage> crops, const TrainOptions& options) {
  if (crops.size() < 2) throw InvalidInput("training needs at least one batch of two crops");
  if (options.batch_size < 2) throw InvalidInput("batch size must be at least 2");
  if (options.checkpoint_every > 0 && options.checkpoint_path.empty()) {
    throw InvalidInput("checkpoint cadence given without a checkpoint path");
  }
  std::vector<PlanarImage> batch_crops;
  while (state.epochs_done < options.epochs) {
    const int epoch = state.epochs_done;
    const auto order = trainpipe::epoch_order(crops.size(), state.shuffle_seed, epoch);
    double weighted = 0.0;
    std::size_t seen = 0;
    for (const auto& batch : trainpipe::make_batches(order, options.batch_size)) {
      batch_crops.clear();
      for (std::size_t i : batch) batch_crops.push_back(crops[i]);
      const Tensor t = make_batch(batch_crops);
      const Gradients g = backward(state.model, t);
      if (!std::isfinite(g.loss)) {
        throw NumericError(fmt::format("non-finite loss at epoch {} step {}", epoch + 1, state.optimizer.step + 1));
      }
      adamax_step(state.model, g, state.optimizer);
      weighted += g.loss * static_cast<double>(batch.size());
      seen += batch.size();
      if (options.on_step) options.on_step(state.optimizer.step, g.loss);
    }
    const double epoch_mse = weighted / static_cast<double>(seen);
    state.loss_curve.push_back(epoch_mse);
    state.epochs_done = epoch + 1;
    if (options.on_epoch) options.on_epoch(state.epochs_done, epoch_mse);
    if (options.checkpoint_every > 0 && state.epochs_done % options.checkpoint_every == 0) {
      save_checkpoint(state, options.checkpoint_path);
    }
  }
}

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  const auto& h = state.optimizer.hyper;
  const nlohmann::json header = {
      {"config", state.model.config().to_json()},
      {"epochs_done", state.epochs_done},
      {"step", state.optimizer.step},
      {"shuffle_seed", state.shuffle_seed},
      {"optimizer",
       {{"learning_rate", h.learning_rate}, {"beta1", h.beta1}, {"beta2", h.beta2}, {"epsilon", h.epsilon}}},
      {"loss_curve", state.loss_curve}};
  const std::string text = header.dump();
  std::string out(kCheckpointMagic, 8);
  put_u64(out, text.size());
  out += text;
  for (const auto& p : state.model.params()) put_doubles(out, p.values);
  for (const auto& m : state.optimizer.m) put_doubles(out, m);
  for (const auto& u : state.optimizer.u) put_doubles(out, u);

  // Write then rename so an interrupted save never clobbers the last good
  // checkpoint.
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + tmp.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  const std::string bytes{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
  if (bytes.size() < 16 || bytes.compare(0, 8, kCheckpointMagic) != 0) {
    throw FormatError(path.string() + ": not a training checkpoint");
  }
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint64_t len = get_u64(raw + 8);
  if (len > bytes.size() - 16) throw FormatError(path.string() + ": truncated checkpoint header");

  TrainState s;
  try {
    const auto header = nlohmann::json::parse(bytes.substr(16, len));
    AdamaxParams hyper;
    const auto& o = header.at("optimizer");
    hyper.learning_rate = o.at("learning_rate").get<double>();
    hyper.beta1 = o.at("beta1").get<double>();
    hyper.beta2 = o.at("beta2").get<double>();
    hyper.epsilon = o.at("epsilon").get<double>();
    s = initial_state(CaeConfig::from_json(header.at("config")), hyper);
    s.epochs_done = header.at("epochs_done").get<int>();
    s.optimizer.step = header.at("step").get<std::int64_t>();
    s.shuffle_seed = header.at("shuffle_seed").get<std::uint64_t>();
    s.loss_curve = header.at("loss_curve").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": malformed checkpoint header: " + e.what());
  }

  std::size_t per_copy = 0;
  for (const auto& p : s.model.params()) per_copy += p.size();
  if (bytes.size() - 16 - len != 3 * per_copy * 8) throw FormatError(path.string() + ": truncated checkpoint");
  const unsigned char* cursor = raw + 16 + len;
  auto read_into = [&](std::vector<double>& values) {
    for (double& v : values) {
      v = std::bit_cast<double>(get_u64(cursor));
      cursor += 8;
    }
  };
  for (auto& p : s.model.params()) read_into(p.values);
  for (auto& m : s.optimizer.m) read_into(m);
  for (auto& u : s.optimizer.u) read_into(u);
  return s;
}

void write_loss_curve_csv(std::span<const double> curve, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << "epoch,mse\n";
  for (std::size_t i = 0; i < curve.size(); ++i) f << fmt::format("{},{:.10g}\n", i + 1, curve[i]);
  if (!f) throw IoError("failed writing " + path.string());
}

}  // namespace dfetrack::cae
