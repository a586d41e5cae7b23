#include "domainbridge/ui2i.hpp"

#include <torch/torch.h>

#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>

#include "domainbridge/error.hpp"
#include "domainbridge/hashing.hpp"
#include "domainbridge/nn/losses.hpp"
#include "domainbridge/nn/networks.hpp"
#include "domainbridge/nn/tensor_image.hpp"
#include "domainbridge/serialization.hpp"

namespace domainbridge {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(DomainCode d) { return d == DomainCode::SOURCE ? "source" : "target"; }

DomainCode domain_code_from_string(std::string_view s) {
  if (s == "source" || s == "SOURCE") return DomainCode::SOURCE;
  if (s == "target" || s == "TARGET") return DomainCode::TARGET;
  throw ConfigError("unknown domain '" + std::string(s) + "' (expected source or target)");
}

void LossWeights::validate() const {
  for (double w : {adversarial, domain, cycle, identity}) {
    if (!std::isfinite(w) || w < 0.0) throw ConfigError("loss weights must be finite and nonnegative");
  }
  if (!(cycle > 0.0)) throw ConfigError("cycle loss weight must be > 0");
  if (!(identity > 0.0)) throw ConfigError("identity loss weight must be > 0");
}

namespace {
bool known_backend(const std::string& id) { return id == "fpgan" || id == "cyclegan"; }
}  // namespace

void UI2IConfig::validate() const {
  if (!known_backend(backend_id)) throw ConfigError("unknown translation backend '" + backend_id + "'");
  if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
  if (total_iterations < checkpoint_every) {
    throw ConfigError("total_iterations must be >= checkpoint_every");
  }
  if (total_iterations % checkpoint_every != 0) {
    throw ConfigError("checkpoint_every (" + std::to_string(checkpoint_every) +
                      ") does not divide total_iterations (" + std::to_string(total_iterations) + ")");
  }
  if (batch_size < 2) throw ConfigError("ui2i batch_size must be >= 2 (one image per domain)");
  if (critic_steps < 1) throw ConfigError("critic_steps must be >= 1");
  if (!(generator.learning_rate > 0.0) || !(discriminator.learning_rate > 0.0)) {
    throw ConfigError("ui2i learning rates must be > 0");
  }
  if (gradient_penalty < 0.0) throw ConfigError("gradient_penalty must be >= 0");
  if (input_size < 4 || input_size % 4 != 0) throw ConfigError("ui2i input_size must be a multiple of 4");
  weights.validate();
}

std::string UI2IConfig::hash() const { return fnv1a_hex(json(*this).dump()); }

std::vector<std::int64_t> plan_checkpoints(const UI2IConfig& config) {
  config.validate();
  std::vector<std::int64_t> out;
  for (std::int64_t it = config.checkpoint_every; it <= config.total_iterations; it += config.checkpoint_every) {
    out.push_back(it);
  }
  return out;
}

std::string checkpoint_file_name(std::int64_t iteration) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "ckpt_%07lld.bin", static_cast<long long>(iteration));
  return buf;
}

namespace {

constexpr const char* kMetaFile = "ckpt_meta.json";

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::shared_ptr<torch::nn::Module> generator_module() = 0;
  virtual std::shared_ptr<torch::nn::Module> critic_module() = 0;
  virtual nn::GeneratorFn generator_fn() = 0;
  virtual nn::CriticFn critic_fn() = 0;
  virtual nn::AdversarialForm form() const = 0;
  virtual double gradient_penalty_weight(const UI2IConfig& c) const = 0;
};

nn::GeneratorShape generator_shape(const UI2IConfig& c, int condition_dim) {
  return {1, condition_dim, c.generator_channels, c.residual_blocks};
}

nn::CriticShape critic_shape(const UI2IConfig& c, int domains) {
  return {1, c.input_size, c.critic_channels, c.critic_layers, domains};
}

// Conditional generator plus one critic with real/fake and domain heads.
class FixedPointGanBackend : public Backend {
 public:
  explicit FixedPointGanBackend(const UI2IConfig& c)
      : generator_(generator_shape(c, 2)), critic_(critic_shape(c, 2)) {}

  std::shared_ptr<torch::nn::Module> generator_module() override { return generator_.ptr(); }
  std::shared_ptr<torch::nn::Module> critic_module() override { return critic_.ptr(); }
  nn::GeneratorFn generator_fn() override {
    return [g = generator_](const torch::Tensor& x, DomainCode to) mutable {
      return g->forward(x, nn::domain_condition(to, x.size(0), x.options()));
    };
  }
  nn::CriticFn critic_fn() override {
    return [d = critic_](const torch::Tensor& x, DomainCode) mutable {
      auto s = d->forward(x);
      return nn::CriticOutput{s.source, s.domains};
    };
  }
  nn::AdversarialForm form() const override { return nn::AdversarialForm::Wasserstein; }
  double gradient_penalty_weight(const UI2IConfig& c) const override { return c.gradient_penalty; }

 private:
  nn::TranslationGenerator generator_;
  nn::PatchCritic critic_;
};

struct GeneratorPairImpl : torch::nn::Module {
  explicit GeneratorPairImpl(const nn::GeneratorShape& shape)
      : to_source(register_module("to_source", nn::TranslationGenerator(shape))),
        to_target(register_module("to_target", nn::TranslationGenerator(shape))) {}
  nn::TranslationGenerator to_source;
  nn::TranslationGenerator to_target;
};
TORCH_MODULE(GeneratorPair);

struct CriticPairImpl : torch::nn::Module {
  explicit CriticPairImpl(const nn::CriticShape& shape)
      : source(register_module("source", nn::PatchCritic(shape))),
        target(register_module("target", nn::PatchCritic(shape))) {}
  nn::PatchCritic source;
  nn::PatchCritic target;
};
TORCH_MODULE(CriticPair);

// Two unconditional generators with least-squares critics, one per domain.
class CycleGanBackend : public Backend {
 public:
  explicit CycleGanBackend(const UI2IConfig& c)
      : generators_(generator_shape(c, 0)), critics_(critic_shape(c, 0)) {}

  std::shared_ptr<torch::nn::Module> generator_module() override { return generators_.ptr(); }
  std::shared_ptr<torch::nn::Module> critic_module() override { return critics_.ptr(); }
  nn::GeneratorFn generator_fn() override {
    return [g = generators_](const torch::Tensor& x, DomainCode to) mutable {
      return to == DomainCode::SOURCE ? g->to_source->forward(x) : g->to_target->forward(x);
    };
  }
  nn::CriticFn critic_fn() override {
    return [d = critics_](const torch::Tensor& x, DomainCode claimed) mutable {
      auto s = claimed == DomainCode::SOURCE ? d->source->forward(x) : d->target->forward(x);
      return nn::CriticOutput{s.source, {}};
    };
  }
  nn::AdversarialForm form() const override { return nn::AdversarialForm::LeastSquares; }
  double gradient_penalty_weight(const UI2IConfig&) const override { return 0.0; }

 private:
  GeneratorPair generators_;
  CriticPair critics_;
};

std::unique_ptr<Backend> make_backend(const UI2IConfig& c) {
  if (c.backend_id == "fpgan") return std::make_unique<FixedPointGanBackend>(c);
  if (c.backend_id == "cyclegan") return std::make_unique<CycleGanBackend>(c);
  throw ConfigError("unknown translation backend '" + c.backend_id + "'");
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

class LoadedTranslator : public TranslationModel {
 public:
  LoadedTranslator(UI2IConfig config, std::unique_ptr<Backend> backend)
      : config_(std::move(config)), backend_(std::move(backend)), generate_(backend_->generator_fn()) {
    backend_->generator_module()->eval();
  }

  std::string backend_id() const override { return config_.backend_id; }
  int input_size() const override { return config_.input_size; }

  std::vector<GrayImage> translate(std::span<const GrayImage> images, DomainCode to) const override {
    std::vector<GrayImage> out;
    if (images.empty()) return out;
    for (const auto& img : images) {
      if (img.width != config_.input_size || img.height != config_.input_size) {
        throw ShapeError("translator expects " + std::to_string(config_.input_size) + "x" +
                         std::to_string(config_.input_size) + " images");
      }
    }
    torch::NoGradGuard no_grad;
    const auto x = nn::to_tensor(images);
    constexpr int64_t chunk = 32;
    out.reserve(images.size());
    for (int64_t start = 0; start < x.size(0); start += chunk) {
      const auto part = x.narrow(0, start, std::min(chunk, x.size(0) - start));
      auto y = nn::from_working_range(generate_(nn::to_working_range(part), to));
      for (auto& img : nn::from_tensor(y)) out.push_back(std::move(img));
    }
    return out;
  }

 private:
  UI2IConfig config_;
  std::unique_ptr<Backend> backend_;
  nn::GeneratorFn generate_;
};

json read_meta(const fs::path& dir) {
  const auto path = dir / kMetaFile;
  if (!fs::exists(path)) throw IoError("no " + std::string(kMetaFile) + " in " + dir.string());
  return read_json_file(path);
}

// ---------------------------------------------------------------------------
// Training helpers
// ---------------------------------------------------------------------------

// Cycles through a shuffled permutation, reshuffling after each pass, so every
// sample is consumed once per pass.
class CyclicSampler {
 public:
  CyclicSampler(std::size_t n, std::uint64_t seed) : order_(n), rng_(seed) {
    std::iota(order_.begin(), order_.end(), 0);
    std::shuffle(order_.begin(), order_.end(), rng_);
  }

  torch::Tensor next(std::size_t count) {
    std::vector<int64_t> picked;
    picked.reserve(count);
    while (picked.size() < count) {
      if (pos_ == order_.size()) {
        std::shuffle(order_.begin(), order_.end(), rng_);
        pos_ = 0;
      }
      picked.push_back(order_[pos_++]);
    }
    return torch::tensor(picked, torch::kLong);
  }

  json state() const {
    std::ostringstream rng;
    rng << rng_;
    return json{{"order", order_}, {"pos", pos_}, {"rng", rng.str()}};
  }

  void restore(const json& j) {
    order_ = j.at("order").get<std::vector<int64_t>>();
    pos_ = j.at("pos").get<std::size_t>();
    std::istringstream rng(j.at("rng").get<std::string>());
    rng >> rng_;
  }

 private:
  std::vector<int64_t> order_;
  std::size_t pos_ = 0;
  std::mt19937_64 rng_;
};

template <typename T>
void save_atomic(const T& value, const fs::path& path) {
  const auto tmp = fs::path(path.string() + ".tmp");
  torch::save(value, tmp.string());
  fs::rename(tmp, path);
}

torch::optim::Adam make_adam(const std::vector<torch::Tensor>& params, const Ui2iOptimizer& o) {
  return torch::optim::Adam(params, torch::optim::AdamOptions(o.learning_rate).betas({o.betas[0], o.betas[1]}));
}

std::vector<GrayImage> load_images_unlabeled(const DatasetManifest& m, int size) {
  // load_images touches only paths and the sidecar.
  return load_images(m, size);
}

}  // namespace

std::vector<CheckpointRecord> list_checkpoints(const fs::path& dir) {
  const json meta = read_meta(dir);
  std::vector<CheckpointRecord> out;
  const auto backend = meta.at("backend_id").get<std::string>();
  std::size_t index = 0;
  for (const auto& c : meta.at("checkpoints")) {
    out.push_back({c.at("iteration").get<std::int64_t>(), dir / c.at("file").get<std::string>(), index++, backend});
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.iteration < b.iteration; });
  return out;
}

std::shared_ptr<const TranslationModel> load_translation_model(const CheckpointRecord& checkpoint) {
  if (!fs::is_regular_file(checkpoint.path)) {
    throw IoError("checkpoint file missing: " + checkpoint.path.string());
  }
  const json meta = read_meta(checkpoint.path.parent_path());
  UI2IConfig config = meta.at("config").get<UI2IConfig>();
  auto backend = make_backend(config);
  try {
    auto generator = backend->generator_module();
    torch::load(generator, checkpoint.path.string());
  } catch (const c10::Error& e) {
    throw IoError("cannot load checkpoint " + checkpoint.path.string() + ": " + e.what_without_backtrace());
  }
  return std::make_shared<LoadedTranslator>(std::move(config), std::move(backend));
}

std::vector<CheckpointRecord> train_ui2i(const DatasetManifest& source, const DatasetManifest& target_train,
                                         const UI2IConfig& config, const fs::path& out_dir,
                                         const Ui2iTrainOptions& options) {
  config.validate();
  if (source.empty()) throw DataError("source domain is empty");
  const DatasetManifest target = target_train.has_split_tags() ? target_train.subset(Split::TRAIN) : target_train;
  if (target.empty()) throw DataError("target training domain is empty");

  const auto source_images = nn::to_tensor(load_images_unlabeled(source, config.input_size));
  const auto target_images = nn::to_tensor(load_images_unlabeled(target, config.input_size));

  torch::manual_seed(config.seed);
  auto backend = make_backend(config);
  auto generator = backend->generator_module();
  auto critic = backend->critic_module();
  auto opt_g = make_adam(generator->parameters(), config.generator);
  auto opt_d = make_adam(critic->parameters(), config.discriminator);
  const auto generate = backend->generator_fn();
  const auto judge = backend->critic_fn();
  const double gp_weight = backend->gradient_penalty_weight(config);

  CyclicSampler source_sampler(static_cast<std::size_t>(source_images.size(0)), config.seed * 2 + 1);
  CyclicSampler target_sampler(static_cast<std::size_t>(target_images.size(0)), config.seed * 2 + 2);

  fs::create_directories(out_dir);
  const fs::path state_dir = out_dir / "resume";
  json meta{{"backend_id", config.backend_id},
            {"config_hash", config.hash()},
            {"config", config},
            {"iteration", 0},
            {"checkpoints", json::array()}};

  std::int64_t start = 0;
  if (fs::exists(out_dir / kMetaFile)) {
    const json existing = read_meta(out_dir);
    if (existing.at("config_hash") != meta.at("config_hash")) {
      throw ConfigError("checkpoint directory " + out_dir.string() + " belongs to a different configuration");
    }
    meta = existing;
    start = meta.at("iteration").get<std::int64_t>();
    if (start > 0) {
      const json resume = read_json_file(state_dir / "resume.json");
      if (resume.at("iteration").get<std::int64_t>() != start) {
        throw IoError("resume state does not match the last checkpoint in " + out_dir.string());
      }
      torch::load(generator, (out_dir / checkpoint_file_name(start)).string());
      torch::load(critic, (state_dir / "critic.pt").string());
      torch::load(opt_g, (state_dir / "generator_opt.pt").string());
      torch::load(opt_d, (state_dir / "critic_opt.pt").string());
      torch::Tensor rng_state;
      torch::load(rng_state, (state_dir / "torch_rng.pt").string());
      at::Generator cpu_generator = at::globalContext().defaultGenerator(at::kCPU);
      cpu_generator.set_state(rng_state);
      source_sampler.restore(resume.at("source_sampler"));
      target_sampler.restore(resume.at("target_sampler"));
    }
  }

  const auto per_domain = static_cast<std::size_t>(std::max(1, config.batch_size / 2));
  generator->train();
  critic->train();
  Ui2iProgress progress;
  for (std::int64_t it = start + 1; it <= config.total_iterations; ++it) {
    if (options.max_iterations_this_call > 0 && it - start > options.max_iterations_this_call) break;
    const auto xs = source_images.index_select(0, source_sampler.next(per_domain));
    const auto xt = target_images.index_select(0, target_sampler.next(per_domain));

    const auto critic_losses =
        nn::compute_critic_losses(generate, judge, xs, xt, config.weights, gp_weight, backend->form());
    opt_d.zero_grad();
    critic_losses.total.backward();
    opt_d.step();
    progress.critic_loss = critic_losses.total.item<double>();

    if (it % config.critic_steps == 0) {
      const auto g_losses = nn::compute_losses(generate, judge, xs, xt, config.weights, backend->form());
      opt_g.zero_grad();
      g_losses.total.backward();
      opt_g.step();
      progress.generator_loss = g_losses.total.item<double>();
      progress.cycle = g_losses.cycle.item<double>();
      progress.identity = g_losses.identity.item<double>();
    }
    progress.iteration = it;
    if (options.on_progress && options.progress_every > 0 && it % options.progress_every == 0) {
      options.on_progress(progress);
    }

    if (it % config.checkpoint_every == 0) {
      save_atomic(generator, out_dir / checkpoint_file_name(it));
      fs::create_directories(state_dir);
      save_atomic(critic, state_dir / "critic.pt");
      save_atomic(opt_g, state_dir / "generator_opt.pt");
      save_atomic(opt_d, state_dir / "critic_opt.pt");
      save_atomic(at::globalContext().defaultGenerator(at::kCPU).get_state(), state_dir / "torch_rng.pt");
      write_json_file(state_dir / "resume.json", json{{"iteration", it},
                                                      {"source_sampler", source_sampler.state()},
                                                      {"target_sampler", target_sampler.state()}});
      meta["iteration"] = it;
      meta["checkpoints"].push_back(json{{"iteration", it}, {"file", checkpoint_file_name(it)}});
      write_json_file(out_dir / kMetaFile, meta);
    }
  }
  if (!fs::exists(out_dir / kMetaFile)) write_json_file(out_dir / kMetaFile, meta);
  return list_checkpoints(out_dir);
}

DatasetManifest translate(const TranslationModel& model, const DatasetManifest& images, DomainCode to,
                          const fs::path& out_dir) {
  fs::create_directories(out_dir);
  DatasetManifest out{images.domain_id + "->" + std::string(to_string(to)), out_dir, {}};
  if (!images.empty()) {
    const auto inputs = load_images(images, model.input_size());
    const auto outputs = model.translate(inputs, to);
    if (outputs.size() != inputs.size()) throw DataError("translator changed the number of images");
    for (std::size_t i = 0; i < outputs.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "%06zu.png", i);
      save_image(out_dir / name, outputs[i], 16);
      ImageSample sample = images.samples[i];
      sample.path = name;
      sample.domain_id = out.domain_id;
      sample.width = outputs[i].width;
      sample.height = outputs[i].height;
      out.samples.push_back(std::move(sample));
    }
  }
  save_metadata({16, model.input_size(), model.input_size()}, out_dir);
  save_manifest(out, out_dir / "manifest.csv");
  return out;
}

DatasetManifest translate(const CheckpointRecord& checkpoint, const DatasetManifest& images, DomainCode to,
                          const fs::path& out_dir) {
  const auto model = load_translation_model(checkpoint);
  return translate(*model, images, to, out_dir);
}

}  // namespace domainbridge
