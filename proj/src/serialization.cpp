#include "domainbridge/serialization.hpp"

#include <fstream>
#include <sstream>

#include "domainbridge/error.hpp"

namespace domainbridge {

using nlohmann::json;

namespace {
template <typename T>
void read_opt(const json& j, const char* key, T& field) {
  if (auto it = j.find(key); it != j.end()) it->get_to(field);
}
}  // namespace

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed, const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) throw ConfigError(std::string("unknown key '") + key + "' in " + what);
  }
}

void to_json(json& j, const ConfusionMatrix& cm) {
  j = json::array({json::array({cm.tp, cm.fn}), json::array({cm.fp, cm.tn})});
}

void from_json(const json& j, ConfusionMatrix& cm) {
  cm.tp = j.at(0).at(0).get<std::size_t>();
  cm.fn = j.at(0).at(1).get<std::size_t>();
  cm.fp = j.at(1).at(0).get<std::size_t>();
  cm.tn = j.at(1).at(1).get<std::size_t>();
}

void to_json(json& j, const EvalReport& r) {
  j = json{{"balanced_accuracy", r.balanced_accuracy},
           {"f1_weighted", r.f1_weighted},
           {"precision_weighted", r.precision_weighted},
           {"recall_weighted", r.recall_weighted},
           {"roc_auc", r.roc_auc ? json(*r.roc_auc) : json(nullptr)},
           {"confusion", r.confusion}};
}

void from_json(const json& j, EvalReport& r) {
  j.at("confusion").get_to(r.confusion);
  j.at("balanced_accuracy").get_to(r.balanced_accuracy);
  j.at("f1_weighted").get_to(r.f1_weighted);
  j.at("precision_weighted").get_to(r.precision_weighted);
  j.at("recall_weighted").get_to(r.recall_weighted);
  const auto& auc = j.at("roc_auc");
  r.roc_auc = auc.is_null() ? std::nullopt : std::optional<double>(auc.get<double>());
}

void to_json(json& j, const AdamSettings& a) {
  j = json{{"name", a.name}, {"learning_rate", a.learning_rate}, {"betas", a.betas}};
}

void from_json(const json& j, AdamSettings& a) {
  reject_unknown_keys(j, {"name", "learning_rate", "betas"}, "optimizer");
  read_opt(j, "name", a.name);
  read_opt(j, "learning_rate", a.learning_rate);
  read_opt(j, "betas", a.betas);
}

void to_json(json& j, const ClassifierConfig& c) {
  j = json{{"architecture_id", c.architecture_id}, {"epochs", c.epochs},
           {"optimizer", c.optimizer},             {"batch_size", c.batch_size},
           {"seed", c.seed},                       {"input_size", c.input_size}};
}

void from_json(const json& j, ClassifierConfig& c) {
  reject_unknown_keys(j, {"architecture_id", "epochs", "optimizer", "batch_size", "seed", "input_size"},
                      "classifier config");
  read_opt(j, "architecture_id", c.architecture_id);
  read_opt(j, "epochs", c.epochs);
  read_opt(j, "optimizer", c.optimizer);
  read_opt(j, "batch_size", c.batch_size);
  read_opt(j, "seed", c.seed);
  read_opt(j, "input_size", c.input_size);
}

void to_json(json& j, const LossWeights& w) {
  j = json{{"adversarial", w.adversarial}, {"domain", w.domain}, {"cycle", w.cycle}, {"identity", w.identity}};
}

void from_json(const json& j, LossWeights& w) {
  reject_unknown_keys(j, {"adversarial", "domain", "cycle", "identity"}, "loss weights");
  read_opt(j, "adversarial", w.adversarial);
  read_opt(j, "domain", w.domain);
  read_opt(j, "cycle", w.cycle);
  read_opt(j, "identity", w.identity);
}

void to_json(json& j, const Ui2iOptimizer& o) {
  j = json{{"learning_rate", o.learning_rate}, {"betas", o.betas}};
}

void from_json(const json& j, Ui2iOptimizer& o) {
  reject_unknown_keys(j, {"learning_rate", "betas"}, "ui2i optimizer");
  read_opt(j, "learning_rate", o.learning_rate);
  read_opt(j, "betas", o.betas);
}

void to_json(json& j, const UI2IConfig& c) {
  j = json{{"backend_id", c.backend_id},
           {"total_iterations", c.total_iterations},
           {"checkpoint_every", c.checkpoint_every},
           {"batch_size", c.batch_size},
           {"generator_optimizer", c.generator},
           {"discriminator_optimizer", c.discriminator},
           {"critic_steps", c.critic_steps},
           {"loss_weights", c.weights},
           {"gradient_penalty", c.gradient_penalty},
           {"seed", c.seed},
           {"input_size", c.input_size},
           {"generator_channels", c.generator_channels},
           {"residual_blocks", c.residual_blocks},
           {"critic_channels", c.critic_channels},
           {"critic_layers", c.critic_layers}};
}

void from_json(const json& j, UI2IConfig& c) {
  reject_unknown_keys(j,
                      {"backend_id", "total_iterations", "checkpoint_every", "batch_size",
                       "generator_optimizer", "discriminator_optimizer", "critic_steps",
                       "loss_weights", "gradient_penalty", "seed", "input_size",
                       "generator_channels", "residual_blocks", "critic_channels", "critic_layers"},
                      "ui2i config");
  read_opt(j, "backend_id", c.backend_id);
  read_opt(j, "total_iterations", c.total_iterations);
  read_opt(j, "checkpoint_every", c.checkpoint_every);
  read_opt(j, "batch_size", c.batch_size);
  read_opt(j, "generator_optimizer", c.generator);
  read_opt(j, "discriminator_optimizer", c.discriminator);
  read_opt(j, "critic_steps", c.critic_steps);
  read_opt(j, "loss_weights", c.weights);
  read_opt(j, "gradient_penalty", c.gradient_penalty);
  read_opt(j, "seed", c.seed);
  read_opt(j, "input_size", c.input_size);
  read_opt(j, "generator_channels", c.generator_channels);
  read_opt(j, "residual_blocks", c.residual_blocks);
  read_opt(j, "critic_channels", c.critic_channels);
  read_opt(j, "critic_layers", c.critic_layers);
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_text_file_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  write_text_file_atomic(path, j.dump(2) + "\n");
}

}  // namespace domainbridge
