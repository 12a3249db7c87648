#include "morphnet/gcnt.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace morphnet {

TransformerConfig GcntConfig::transformer() const {
  TransformerConfig t;
  t.layers = transformer_layers;
  t.heads = heads;
  t.model = model;
  t.feedforward = feedforward;
  t.max_distance = max_distance;
  return t;
}

void GcntConfig::validate() const {
  if (obs_dim < 1 || num_types < 1 || model < 1 || action_dim < 1) {
    throw std::invalid_argument("net: obs_dim, num_types, model and action_dim must be positive");
  }
  if (gcn.layers < 1 || gcn.width < 1) throw std::invalid_argument("net: gcn layers and width must be positive");
  wl.validate();
  transformer().validate();
}

bool GcntConfig::operator==(const GcntConfig& o) const {
  return obs_dim == o.obs_dim && num_types == o.num_types && model == o.model && gcn.layers == o.gcn.layers &&
         gcn.width == o.gcn.width && wl.iterations == o.wl.iterations && wl.bins == o.wl.bins &&
         transformer_layers == o.transformer_layers && heads == o.heads && feedforward == o.feedforward &&
         max_distance == o.max_distance && action_dim == o.action_dim && use_gcn == o.use_gcn &&
         use_wl == o.use_wl && use_distance == o.use_distance;
}

MorphologyEncoding encode(const Morphology& m, const GcntConfig& cfg) {
  validate(m);
  MorphologyEncoding e;
  e.morphology = m;
  e.k = static_cast<std::size_t>(m.num_nodes);
  e.one_hot = one_hot_features(m, cfg.num_types);
  e.a_hat = normalized_adjacency(adjacency(m));
  e.distances = floyd_distances(m);
  e.clamped = clamp_distances(e.distances, cfg.max_distance);
  e.histogram = wl_histogram(m, cfg.wl).normalized();
  e.action_mask = ad::Matrix(e.k, static_cast<std::size_t>(cfg.action_dim), 1.0);
  for (int a = 0; a < cfg.action_dim; ++a) e.action_mask(static_cast<std::size_t>(m.root), static_cast<std::size_t>(a)) = 0.0;
  return e;
}

const MorphologyEncoding& EncodingCache::get(const Morphology& m) {
  auto it = cache_.find(m.name);
  if (it != cache_.end()) {
    if (!(it->second.morphology == m)) throw ContractError("two different morphologies share the name " + m.name);
    return it->second;
  }
  return cache_.emplace(m.name, encode(m, cfg_)).first->second;
}

ad::Matrix tile_rows(const ad::Matrix& m, std::size_t batch) {
  ad::Matrix out(m.rows() * batch, m.cols());
  for (std::size_t b = 0; b < batch; ++b) std::copy(m.data(), m.data() + m.size(), out.data() + b * m.size());
  return out;
}

// ---- network --------------------------------------------------------------

GcntNetwork::GcntNetwork(GcntConfig cfg, NetworkRole role, std::uint64_t seed, bool with_log_std)
    : cfg_(std::move(cfg)), role_(role) {
  cfg_.validate();
  Rng rng(seed);
  const auto model = static_cast<std::size_t>(cfg_.model);
  const auto act = static_cast<std::size_t>(cfg_.action_dim);
  input_dim_ = static_cast<std::size_t>(cfg_.obs_dim) + (role == NetworkRole::kCritic ? act : 0);
  output_dim_ = role == NetworkRole::kActor ? act : 1;

  obs1_ = make_linear(params_, "obs.l1", input_dim_, model, rng);
  obs2_ = make_linear(params_, "obs.l2", model, model, rng);
  std::size_t morph_in = 0;
  if (cfg_.use_gcn) {
    gcn_ = make_gcn_stack(params_, "gcn", cfg_.num_types, cfg_.gcn, rng);
    morph_in += static_cast<std::size_t>(cfg_.gcn.width);
  }
  if (cfg_.use_wl) morph_in += static_cast<std::size_t>(cfg_.wl.bins);
  if (morph_in > 0) morph_proj_ = params_.add("morph_proj", glorot_uniform(morph_in, model, rng));
  transformer_ = make_transformer(params_, "transformer", cfg_.transformer(), cfg_.use_distance, rng);
  decoder_ = make_linear(params_, "decoder", model, output_dim_, rng);
  if (with_log_std) log_std_ = params_.add("log_std", ad::Matrix(1, act, kInitialLogStd));
}

ad::Var GcntNetwork::morph_features(const ParamBinding& bind, const MorphologyEncoding& enc) const {
  ad::Tape& t = bind.tape;
  if (!morph_proj_) return t.constant(ad::Matrix(enc.k, static_cast<std::size_t>(cfg_.model)));
  std::optional<ad::Var> parts;
  if (gcn_) parts = gcn_stack_forward(bind, enc.one_hot, enc.a_hat, *gcn_);
  if (cfg_.use_wl) {
    const ad::Var w = t.constant(tile_rows(enc.histogram, enc.k));
    parts = parts ? ad::concat_cols(*parts, w) : w;
  }
  return ad::matmul(*parts, bind(*morph_proj_));
}

ad::Var GcntNetwork::forward(const ParamBinding& bind, const MorphologyEncoding& enc, ad::Var input,
                             std::size_t batch) const {
  if (input.rows() != enc.k * batch || input.cols() != input_dim_) {
    throw DimensionError("network input " + input.value().shape_string() + " does not match " +
                         std::to_string(batch) + " samples of " + std::to_string(enc.k) + " limbs x " +
                         std::to_string(input_dim_));
  }
  const ad::Var e = linear(bind, ad::relu(linear(bind, input, obs1_)), obs2_);
  ad::Var z = e;
  if (morph_proj_) {
    const ad::Var mf = morph_features(bind, enc);
    z = ad::add(e, batch == 1 ? mf : ad::repeat_rows(mf, batch));
  }
  std::optional<ad::Var> bias;
  if (transformer_.distance_table) bias = distance_bias(bind, *transformer_.distance_table, enc.clamped, enc.k);
  const ad::Var y = transformer_forward(bind, z, bias, transformer_, enc.k);
  return ad::add(y, e);
}

ad::Var GcntNetwork::head(const ParamBinding& bind, ad::Var trunk) const { return linear(bind, trunk, decoder_); }

ad::Var GcntNetwork::log_std(const ParamBinding& bind) const {
  if (!log_std_) throw ContractError("network has no log_std parameter");
  return bind(*log_std_);
}

void GcntNetwork::copy_from(const GcntNetwork& other) {
  if (other.params_.size() != params_.size()) throw ContractError("copy_from: structure mismatch");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].value.size() != other.params_[i].value.size()) throw ContractError("copy_from: shape mismatch");
    params_[i].value = other.params_[i].value;
  }
}

void GcntNetwork::polyak_into(GcntNetwork& target, double tau) const {
  if (target.params_.size() != params_.size()) throw ContractError("polyak_into: structure mismatch");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& tv = target.params_[i].value;
    const auto& ov = params_[i].value;
    for (std::size_t j = 0; j < tv.size(); ++j) tv[j] = tau * ov[j] + (1.0 - tau) * tv[j];
  }
}

// ---- actor ----------------------------------------------------------------

ActMode parse_act_mode(std::string_view name) {
  if (name == "deterministic") return ActMode::kDeterministic;
  if (name == "td3_explore") return ActMode::kTd3Explore;
  if (name == "ppo_sample") return ActMode::kPpoSample;
  throw std::invalid_argument("unknown action mode: " + std::string(name));
}

double log1m_tanh_sq(double u) {
  // 1 − tanh²u = 4 / (e^u + e^-u)², so log = 2 (log 2 − |u| − log1p(e^{-2|u|})).
  const double a = std::abs(u);
  return 2.0 * (std::log(2.0) - a - std::log1p(std::exp(-2.0 * a)));
}

ActionSample actor_act(GcntNetwork& actor, const MorphologyEncoding& enc, const ad::Matrix& obs, std::size_t batch,
                       ActMode mode, Rng& rng, double explore_sigma) {
  ad::Tape tape(false);
  const ParamBinding bind = actor.bind(tape, false);
  const ad::Var mean = actor.head(bind, actor.forward(bind, enc, tape.constant(obs), batch));
  const ad::Matrix& mu = mean.value();
  const std::size_t act = mu.cols();
  const ad::Matrix mask = tile_rows(enc.action_mask, batch);

  ActionSample out;
  out.actions = ad::Matrix(mu.rows(), act);
  out.pre_tanh = mu;
  switch (mode) {
    case ActMode::kDeterministic:
      for (std::size_t i = 0; i < mu.size(); ++i) out.actions[i] = std::tanh(mu[i]) * mask[i];
      break;
    case ActMode::kTd3Explore:
      for (std::size_t i = 0; i < mu.size(); ++i) {
        const double noisy = std::tanh(mu[i]) + explore_sigma * rng.normal();
        out.actions[i] = std::clamp(noisy, -1.0, 1.0) * mask[i];
      }
      break;
    case ActMode::kPpoSample: {
      const ad::Matrix& ls = actor.log_std(bind).value();
      out.log_prob.assign(batch, 0.0);
      const double half_log_2pi = 0.5 * std::log(2.0 * M_PI);
      for (std::size_t r = 0; r < mu.rows(); ++r) {
        for (std::size_t c = 0; c < act; ++c) {
          const std::size_t i = r * act + c;
          const double sigma = std::exp(ls[c]);
          const double eps = rng.normal();
          const double u = mu[i] + sigma * eps;
          out.pre_tanh[i] = u;
          out.actions[i] = std::tanh(u) * mask[i];
          if (mask[i] != 0.0) {
            out.log_prob[r / enc.k] += -0.5 * eps * eps - ls[c] - half_log_2pi - log1m_tanh_sq(u);
          }
        }
      }
      break;
    }
  }
  return out;
}

ad::Var actor_action(const ParamBinding& bind, const GcntNetwork& actor, const MorphologyEncoding& enc,
                     const ad::Matrix& obs, std::size_t batch) {
  ad::Tape& t = bind.tape;
  const ad::Var mean = actor.head(bind, actor.forward(bind, enc, t.constant(obs), batch));
  return ad::mul(ad::tanh(mean), t.constant(tile_rows(enc.action_mask, batch)));
}

ad::Var actor_log_prob(const ParamBinding& bind, const GcntNetwork& actor, const MorphologyEncoding& enc,
                       const ad::Matrix& obs, const ad::Matrix& pre_tanh, std::size_t batch) {
  ad::Tape& t = bind.tape;
  const ad::Var mu = actor.head(bind, actor.forward(bind, enc, t.constant(obs), batch));
  const ad::Var ls = actor.log_std(bind);
  const ad::Var z = ad::mul(ad::sub(t.constant(pre_tanh), mu), ad::exp(ad::scale(ls, -1.0)));
  ad::Matrix offset(pre_tanh.rows(), pre_tanh.cols());
  const double half_log_2pi = 0.5 * std::log(2.0 * M_PI);
  for (std::size_t i = 0; i < offset.size(); ++i) offset[i] = -half_log_2pi - log1m_tanh_sq(pre_tanh[i]);
  const ad::Var per_dim = ad::add(ad::sub(ad::scale(ad::mul(z, z), -0.5), ls), t.constant(offset));
  const ad::Var masked = ad::mul(per_dim, t.constant(tile_rows(enc.action_mask, batch)));
  // Sum over limbs and action dimensions.
  ad::Var per_sample = ad::scale(ad::segment_mean(masked, enc.k), static_cast<double>(enc.k));
  if (per_sample.cols() > 1) {
    per_sample = ad::matmul(per_sample, t.constant(ad::Matrix(per_sample.cols(), 1, 1.0)));
  }
  return per_sample;
}

// ---- critic ---------------------------------------------------------------

ad::Var critic_value(const ParamBinding& bind, const GcntNetwork& critic, const MorphologyEncoding& enc,
                     const ad::Matrix& obs, std::optional<ad::Var> actions, std::size_t batch) {
  ad::Tape& t = bind.tape;
  ad::Var input = t.constant(obs);
  if (actions) input = ad::concat_cols(input, *actions);
  const ad::Var per_limb = critic.head(bind, critic.forward(bind, enc, input, batch));
  return ad::segment_mean(per_limb, enc.k);
}

// ---- embeddings -----------------------------------------------------------

std::string embedding_csv_header(int model) {
  std::string h = "morphology,node,limb_type";
  for (int i = 0; i < model; ++i) h += ",f" + std::to_string(i);
  return h;
}

void export_embeddings(const std::vector<Morphology>& ms, GcntNetwork& net, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << embedding_csv_header(net.config().model) << "\n";
  char buf[32];
  for (const auto& m : ms) {
    const MorphologyEncoding enc = encode(m, net.config());
    ad::Tape tape(false);
    const ad::Matrix f = net.morph_features(net.bind(tape, false), enc).value();
    for (std::size_t v = 0; v < enc.k; ++v) {
      out << m.name << "," << v << "," << m.limb_types[v];
      for (std::size_t c = 0; c < f.cols(); ++c) {
        std::snprintf(buf, sizeof(buf), "%.17g", f(v, c));
        out << "," << buf;
      }
      out << "\n";
    }
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace morphnet
