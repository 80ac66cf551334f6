#include "tabtune/minicl.hpp"

#include <algorithm>
#include <cmath>

#include "tabtune/error.hpp"

namespace tabtune {

namespace {

// Query rows are evaluated in chunks; rows never interact, so chunking does
// not change any value.
constexpr std::size_t kPredictChunk = 256;

std::string layer_name(std::size_t layer, const char* suffix) {
  return "layers." + std::to_string(layer) + "." + suffix;
}

FeatureMatrix stack_rows(const FeatureMatrix& a, const FeatureMatrix& b) {
  FeatureMatrix out(a.rows + b.rows, a.cols);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()));
  return out;
}

template <class Store>
Var forward_impl(const MiniIclArch& arch, const std::optional<LoraConfig>& lora, Store& store, Tape& tape,
                 const FeatureMatrix& support_x, std::span<const int> support_y, const FeatureMatrix& query_x,
                 bool train, Rng* rng) {
  const std::size_t ns = support_x.rows, nq = query_x.rows, n = ns + nq;
  if (ns == 0) raise(ErrorCode::EmptySupport, "in-context forward needs at least one support row");
  if (support_y.size() != ns) raise(ErrorCode::LengthMismatch, "support labels differ from support rows");
  if (support_x.cols != query_x.cols && nq > 0) raise(ErrorCode::ShapeMismatch, "support/query widths differ");
  if (support_x.cols != store.at("embed.weight").value.cols())
    raise(ErrorCode::ShapeMismatch, "feature width differs from the embedding input");

  const FeatureMatrix rows = stack_rows(support_x, query_x);
  Var x = tape.constant(Tensor({n, rows.cols}, rows.data));
  Var h = ops::add_row(ops::linear(x, tape.param(store, "embed.weight")), tape.param(store, "embed.bias"));

  std::vector<std::size_t> label_ids(n, arch.k_max);  // slot k_max is the unknown-label vector
  for (std::size_t i = 0; i < ns; ++i) {
    if (support_y[i] < 0 || static_cast<std::size_t>(support_y[i]) >= arch.k_max)
      raise(ErrorCode::TooManyClasses, "support label exceeds k_max");
    label_ids[i] = static_cast<std::size_t>(support_y[i]);
  }
  h = ops::add(h, ops::embedding_lookup(tape.param(store, "label_embed"), label_ids));

  const AttentionMask mask = split_mask(ns, nq);
  for (std::size_t l = 0; l < arch.n_layers; ++l) {
    Var q = lora_linear(tape, h, store, layer_name(l, "attn.wq"), lora, train, rng);
    Var k = lora_linear(tape, h, store, layer_name(l, "attn.wk"), lora, train, rng);
    Var v = lora_linear(tape, h, store, layer_name(l, "attn.wv"), lora, train, rng);
    Var a = ops::attention(q, k, v, mask, arch.n_heads);
    a = lora_linear(tape, a, store, layer_name(l, "attn.wo"), lora, train, rng);
    h = ops::layer_norm(ops::add(h, a), tape.param(store, layer_name(l, "ln1.gain")),
                        tape.param(store, layer_name(l, "ln1.bias")));
    Var m = ops::add_row(ops::linear(h, tape.param(store, layer_name(l, "mlp.w1"))),
                         tape.param(store, layer_name(l, "mlp.b1")));
    m = ops::add_row(ops::linear(ops::relu(m), tape.param(store, layer_name(l, "mlp.w2"))),
                     tape.param(store, layer_name(l, "mlp.b2")));
    h = ops::layer_norm(ops::add(h, m), tape.param(store, layer_name(l, "ln2.gain")),
                        tape.param(store, layer_name(l, "ln2.bias")));
  }
  Var hq = ops::slice_rows(h, ns, nq);
  return ops::add_row(ops::linear(hq, tape.param(store, "head.weight")), tape.param(store, "head.bias"));
}

}  // namespace

AttentionMask split_mask(std::size_t n_support, std::size_t n_query) {
  const std::size_t n = n_support + n_query;
  AttentionMask mask{n, n, std::vector<std::uint8_t>(n * n, 0)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n_support; ++j) mask.allowed[i * n + j] = 1;
    if (i >= n_support) mask.allowed[i * n + i] = 1;
  }
  return mask;
}

MiniIcl::MiniIcl(std::size_t n_features, std::size_t n_classes, MiniIclArch arch, std::uint64_t seed)
    : Model(n_features, n_classes), arch_(arch) {
  if (n_classes > arch_.k_max)
    raise(ErrorCode::TooManyClasses, std::to_string(n_classes) + " classes exceed k_max=" + std::to_string(arch_.k_max));
  if (n_features == 0) raise(ErrorCode::ShapeMismatch, "MiniICL needs at least one input feature");
  if (arch_.d_model % arch_.n_heads != 0) raise(ErrorCode::InvalidConfig, "d_model must be divisible by n_heads");

  Rng rng(derive_seed(seed, "minicl-init"));
  const std::size_t d = arch_.d_model, hid = arch_.mlp_hidden;
  auto dense = [&](std::size_t out, std::size_t in) {
    return random_normal({out, in}, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  };
  // With no pretraining a random transformer predicts at chance. Features
  // live in the first half of the model width and label embeddings in the
  // second; queries and keys share one map that reads only the feature half,
  // values and outputs pass through, the MLP starts silent and the head reads
  // the label half against the label embeddings. The untrained model is then
  // a similarity-weighted vote over support labels; training refines it.
  const std::size_t half = d / 2;
  Tensor identity = Tensor::matrix(d, d);
  for (std::size_t i = 0; i < d; ++i) identity.at(i, i) = 1.0;
  Tensor embed = dense(d, n_features);
  for (std::size_t i = half; i < d; ++i)
    for (std::size_t j = 0; j < n_features; ++j) embed.at(i, j) = 0.0;
  params_.add("embed.weight", std::move(embed));
  params_.add("embed.bias", Tensor::vector(d));
  Tensor label_embed = random_normal({arch_.k_max + 1, d}, 1.0, rng);
  for (std::size_t c = 0; c <= arch_.k_max; ++c)
    for (std::size_t j = 0; j < d; ++j)
      if (j < half || c == arch_.k_max) label_embed.at(c, j) = 0.0;
  params_.add("label_embed", label_embed);
  for (std::size_t l = 0; l < arch_.n_layers; ++l) {
    Tensor wq = dense(d, d);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = half; j < d; ++j) wq.at(i, j) = 0.0;
    params_.add(layer_name(l, "attn.wq"), wq);
    params_.add(layer_name(l, "attn.wk"), wq);
    params_.add(layer_name(l, "attn.wv"), identity);
    params_.add(layer_name(l, "attn.wo"), identity);
    params_.add(layer_name(l, "ln1.gain"), Tensor::vector(d, 1.0));
    params_.add(layer_name(l, "ln1.bias"), Tensor::vector(d));
    params_.add(layer_name(l, "mlp.w1"), dense(hid, d));
    params_.add(layer_name(l, "mlp.b1"), Tensor::vector(hid));
    params_.add(layer_name(l, "mlp.w2"), Tensor::matrix(d, hid));
    params_.add(layer_name(l, "mlp.b2"), Tensor::vector(d));
    params_.add(layer_name(l, "ln2.gain"), Tensor::vector(d, 1.0));
    params_.add(layer_name(l, "ln2.bias"), Tensor::vector(d));
  }
  Tensor head = Tensor::matrix(arch_.k_max, d);
  const double head_scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (std::size_t c = 0; c < arch_.k_max; ++c)
    for (std::size_t j = 0; j < d; ++j) head.at(c, j) = label_embed.at(c, j) * head_scale;
  params_.add("head.weight", std::move(head));
  params_.add("head.bias", Tensor::vector(arch_.k_max));
}

const std::string& MiniIcl::name() const {
  static const std::string kName = "MiniICL";
  return kName;
}

std::vector<std::string> MiniIcl::lora_targets() const {
  std::vector<std::string> out;
  for (std::size_t l = 0; l < arch_.n_layers; ++l)
    for (const char* w : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"}) out.push_back(layer_name(l, w));
  return out;
}

std::vector<std::string> MiniIcl::head_params() const { return {"head.weight", "head.bias"}; }

Var MiniIcl::forward(Tape& tape, const FeatureMatrix& support_x, std::span<const int> support_y,
                     const FeatureMatrix& query_x, bool train, Rng* rng) {
  return forward_impl(arch_, lora_, params_, tape, support_x, support_y, query_x, train, rng);
}

Var MiniIcl::episode_loss(Tape& tape, const FeatureMatrix& support_x, std::span<const int> support_y,
                          const FeatureMatrix& query_x, std::span<const int> query_y, std::size_t n_valid, bool train,
                          Rng* rng) {
  if (n_valid > arch_.k_max) raise(ErrorCode::TooManyClasses, "episode has more classes than k_max");
  Var logits = forward(tape, support_x, support_y, query_x, train, rng);
  std::vector<std::uint8_t> valid(arch_.k_max, 0);
  std::fill_n(valid.begin(), n_valid, 1);
  return ops::cross_entropy(logits, query_y, valid);
}

Tensor MiniIcl::query_logits(const FeatureMatrix& support_x, std::span<const int> support_y,
                             const FeatureMatrix& query_x, std::size_t n_valid) const {
  if (n_valid > arch_.k_max) raise(ErrorCode::TooManyClasses, "more classes than k_max");
  Tensor out = Tensor::matrix(query_x.rows, n_valid);
  for (std::size_t begin = 0; begin < query_x.rows; begin += kPredictChunk) {
    const std::size_t count = std::min(kPredictChunk, query_x.rows - begin);
    FeatureMatrix chunk(count, query_x.cols);
    std::copy_n(query_x.data.begin() + static_cast<std::ptrdiff_t>(begin * query_x.cols), count * query_x.cols,
                chunk.data.begin());
    Tape tape(false);
    Var logits = forward_impl(arch_, lora_, params_, tape, support_x, support_y, chunk, false, nullptr);
    for (std::size_t i = 0; i < count; ++i)
      for (std::size_t c = 0; c < n_valid; ++c) out.at(begin + i, c) = logits.value().at(i, c);
  }
  return out;
}

Tensor MiniIcl::predict_proba(const FeatureMatrix& x) const {
  const ContextState& ctx = context();
  Tensor logits = query_logits(ctx.features, ctx.labels, x, n_classes());
  for (double& v : logits.values()) v /= arch_.softmax_temperature;
  return softmax_rows(logits);
}

}  // namespace tabtune
