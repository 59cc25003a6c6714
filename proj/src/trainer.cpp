#include "cxnlm/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "cxnlm/error.hpp"
#include "cxnlm/io.hpp"
#include "cxnlm/random.hpp"

namespace cxnlm {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ModelError("learning rate must be positive");
  if (warmup_fraction < 0.0 || warmup_fraction >= 1.0) throw ModelError("warmup_fraction must be in [0, 1)");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) throw ModelError("Adam betas must be in [0, 1)");
  if (!(adam_epsilon > 0.0)) throw ModelError("adam_epsilon must be positive");
  if (weight_decay < 0.0 || grad_clip < 0.0) throw ModelError("weight_decay and grad_clip must be non-negative");
  if (batch_size <= 0) throw ModelError("batch_size must be positive");
  if (epochs != 1) throw ModelError("training runs exactly one epoch");
  if (!(init_stddev > 0.0)) throw ModelError("init_stddev must be positive");
  if (shards <= 0 || threads <= 0) throw ModelError("shards and threads must be positive");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"learning_rate", learning_rate}, {"warmup_fraction", warmup_fraction}, {"beta1", beta1},
          {"beta2", beta2},                 {"adam_epsilon", adam_epsilon},       {"weight_decay", weight_decay},
          {"grad_clip", grad_clip},         {"batch_size", batch_size},           {"epochs", epochs},
          {"seed", seed},                   {"init_stddev", init_stddev},         {"shards", shards},
          {"threads", threads}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j, bool strict) {
  TrainConfig c;
  auto read = [&](const char* key, auto& field) {
    if (j.contains(key)) {
      field = j.at(key).get<std::decay_t<decltype(field)>>();
    } else if (strict) {
      throw ModelError(std::string("train config is missing '") + key + "'");
    }
  };
  read("learning_rate", c.learning_rate);
  read("warmup_fraction", c.warmup_fraction);
  read("beta1", c.beta1);
  read("beta2", c.beta2);
  read("adam_epsilon", c.adam_epsilon);
  read("weight_decay", c.weight_decay);
  read("grad_clip", c.grad_clip);
  read("batch_size", c.batch_size);
  read("epochs", c.epochs);
  read("seed", c.seed);
  read("init_stddev", c.init_stddev);
  read("shards", c.shards);
  // threads never changes results, so it may always be left out
  if (j.contains("threads")) c.threads = j.at("threads").get<int>();
  return c;
}

std::vector<double> checkpoint_fractions() {
  std::vector<double> f;
  for (int i = 1; i <= 10; ++i) f.push_back(i / 100.0);
  for (int i = 2; i <= 10; ++i) f.push_back(i / 10.0);
  return f;
}

std::vector<std::int64_t> checkpoint_steps(std::int64_t total_steps) {
  const auto fractions = checkpoint_fractions();
  if (total_steps < static_cast<std::int64_t>(fractions.size())) {
    throw ModelError("training would take only " + std::to_string(total_steps) +
                     " optimizer steps; at least 19 are needed for the checkpoint schedule "
                     "(use a larger dataset or a smaller batch size)");
  }
  std::vector<std::int64_t> steps;
  for (double f : fractions) steps.push_back(std::max<std::int64_t>(1, std::llround(static_cast<double>(total_steps) * f)));
  return steps;
}

std::vector<Sequence> pack_sequences(const Tokenizer& tokenizer, const std::vector<std::string>& lines,
                                     int context_length) {
  if (context_length <= 0) throw ModelError("context length must be positive");
  std::vector<TokenId> stream;
  for (const auto& line : lines) {
    stream.push_back(tokenizer.bos());
    const auto ids = tokenizer.encode(line);
    stream.insert(stream.end(), ids.begin(), ids.end());
    stream.push_back(tokenizer.eos());
  }
  std::vector<Sequence> out;
  const auto ctx = static_cast<std::size_t>(context_length);
  for (std::size_t start = 0; start + 1 < stream.size(); start += ctx) {
    const std::size_t end = std::min(stream.size(), start + ctx + 1);
    Sequence s;
    s.inputs.assign(stream.begin() + static_cast<long>(start), stream.begin() + static_cast<long>(end) - 1);
    s.targets.assign(stream.begin() + static_cast<long>(start) + 1, stream.begin() + static_cast<long>(end));
    out.push_back(std::move(s));
  }
  return out;
}

double perplexity(const Transformer<float>& model, const std::vector<Sequence>& sequences) {
  double nll = 0.0;
  std::size_t positions = 0;
  for (const auto& s : sequences) {
    const auto lp = model.log_probs(s.inputs);
    for (std::size_t t = 0; t < s.targets.size(); ++t) nll -= lp(static_cast<Eigen::Index>(t), s.targets[t]);
    positions += s.targets.size();
  }
  if (positions == 0) throw ModelError("perplexity needs at least one position");
  return std::exp(nll / static_cast<double>(positions));
}

std::string TrainLog::csv() const {
  std::ostringstream out;
  out << "# threads=" << threads << " shards=" << shards << "\n";
  out << "step,frac,train_loss,heldout_ppl\n";
  for (const auto& r : records) {
    out << r.step << ',' << io::format_double(r.fraction) << ',' << io::format_double(r.train_loss) << ',';
    if (r.heldout_ppl) out << io::format_double(*r.heldout_ppl);
    out << '\n';
  }
  return out.str();
}

std::string checkpoint_filename(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ckpt_%.2f.bin", fraction);
  return buf;
}

TrainLog train(const ModelConfig& model_config, const TrainConfig& config, const std::vector<Sequence>& train,
               const std::vector<Sequence>& heldout, const std::string& tokenizer_hash, const CheckpointSink& sink) {
  config.validate();
  if (train.empty()) throw ModelError("no training sequences");
  if (heldout.empty()) throw ModelError("no held-out sequences");

  const auto batch = static_cast<std::size_t>(config.batch_size);
  const auto total_steps = static_cast<std::int64_t>((train.size() + batch - 1) / batch);
  const auto ck_steps = checkpoint_steps(total_steps);
  const auto fractions = checkpoint_fractions();
  const auto warmup = std::max<std::int64_t>(1, std::llround(config.warmup_fraction * total_steps));

  Transformer<float> model(model_config);
  model.init(config.seed, config.init_stddev);
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(config.seed, 1));
  rng.shuffle(order);

  auto& w = model.params();
  std::vector<float> m(w.size(), 0.0f), v(w.size(), 0.0f);
  ParamBuffer<float> grad;
  std::vector<Sequence> minibatch;

  TrainLog log;
  log.total_steps = total_steps;
  log.threads = config.threads;
  log.shards = config.shards;
  log.checkpoint_steps = ck_steps;
  std::size_t next_ck = 0;

  for (std::int64_t step = 1; step <= total_steps; ++step) {
    minibatch.clear();
    const std::size_t begin = static_cast<std::size_t>(step - 1) * batch;
    for (std::size_t i = begin; i < std::min(train.size(), begin + batch); ++i) minibatch.push_back(train[order[i]]);
    const double loss = loss_and_gradients(model, minibatch, grad, config.shards, config.threads);

    double norm2 = 0.0;
    for (float g : grad) norm2 += static_cast<double>(g) * g;
    const double norm = std::sqrt(norm2);
    const float clip =
        (config.grad_clip > 0.0 && norm > config.grad_clip) ? static_cast<float>(config.grad_clip / norm) : 1.0f;

    const double lr = config.learning_rate * std::min(1.0, static_cast<double>(step) / static_cast<double>(warmup));
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
    const auto b1 = static_cast<float>(config.beta1), b2 = static_cast<float>(config.beta2);
    const auto step_size = static_cast<float>(lr / bc1);
    const auto inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
    const auto eps = static_cast<float>(config.adam_epsilon);
    const auto decay = static_cast<float>(lr * config.weight_decay);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const float g = grad[i] * clip;
      m[i] = b1 * m[i] + (1.0f - b1) * g;
      v[i] = b2 * v[i] + (1.0f - b2) * g * g;
      w[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + eps) + decay * w[i];
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (!std::isfinite(w[i])) {
        throw ModelError("parameter " + std::to_string(i) + " became non-finite at step " + std::to_string(step));
      }
    }

    LossRecord rec;
    rec.step = step;
    rec.fraction = static_cast<double>(step) / static_cast<double>(total_steps);
    rec.train_loss = loss;
    bool is_ck = false;
    while (next_ck < ck_steps.size() && ck_steps[next_ck] == step) {
      if (!is_ck) rec.heldout_ppl = perplexity(model, heldout);
      is_ck = true;
      Checkpoint ck;
      ck.config = model_config;
      ck.params.assign(w.begin(), w.end());
      ck.tokenizer_hash = tokenizer_hash;
      ck.step = step;
      ck.fraction = fractions[next_ck];
      sink(ck);
      ++next_ck;
    }
    log.records.push_back(rec);
  }
  return log;
}

}  // namespace cxnlm
