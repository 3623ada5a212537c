#include "spikesplit/network.hpp"

#include <string>
#include <utility>

#include "spikesplit/error.hpp"

namespace spikesplit {

namespace {

/// Convolution (or transposed convolution) followed by an optional tdBN.
template <class Op>
struct ConvBn {
  Op op;
  std::optional<TdBN> bn;
  Tensor input;
  TdbnCache bn_cache;

  ConvBn() = default;
  ConvBn(Op o, std::optional<TdBN> norm) : op(std::move(o)), bn(std::move(norm)) {
    if (bn) bn->init_identity_stats();
  }

  Tensor infer(const Tensor& x) const {
    Tensor y = op.forward(x);
    return bn ? bn->infer(y) : y;
  }
  Tensor calibrate(const Tensor& x) {
    Tensor y = op.forward(x);
    if (!bn) return y;
    const Real m = bn->momentum();
    bn->set_momentum(1.0);
    TdbnCache scratch;
    bn->forward_train(y, scratch);
    bn->set_momentum(m);
    return bn->infer(y);
  }
  Tensor forward_train(const Tensor& x) {
    input = x;
    Tensor y = op.forward(x);
    return bn ? bn->forward_train(y, bn_cache) : y;
  }
  Tensor backward(const Tensor& grad) {
    if (input.empty()) throw StateError("backward called without a recorded forward pass");
    Tensor g = bn ? bn->backward(bn_cache, grad) : grad;
    return op.backward(input, g);
  }
  void collect(std::vector<Param*>& out) {
    op.collect(out);
    if (bn) bn->collect(out);
  }
};

struct LifNode {
  LifParams lif;
  SurrogateParams sg;
  LifCache cache;

  Tensor infer(const Tensor& x, SpikeRecorder* recorder) const {
    Tensor s = lif_forward(x, lif);
    if (recorder != nullptr) recorder->push_back(SpikeTensor::pack(s));
    return s;
  }
  Tensor forward_train(const Tensor& x, const TrainOptions& opts) {
    sg = opts.surrogate;
    return lif_forward_train(x, lif, sg, opts.spike_fn, cache);
  }
  Tensor backward(const Tensor& grad) { return lif_backward(cache, grad, lif, sg); }
};

template <class Op>
struct Stage {
  ConvBn<Op> conv;
  LifNode lif;
};

/// Straight chain of {conv, tdBN, LIF} stages: stem, separable blocks, encoder, decoder.
template <class Op>
class ChainBlock final : public Block {
 public:
  explicit ChainBlock(std::string name) : name_(std::move(name)) {}

  void add_stage(Op op, std::optional<TdBN> bn, const LifParams& lif) {
    stages_.push_back({ConvBn<Op>(std::move(op), std::move(bn)), LifNode{lif, {}, {}}});
  }

  const std::string& name() const override { return name_; }

  Shape3 output_shape(const Shape3& in) const override {
    Shape3 s = in;
    for (const auto& st : stages_) s = st.conv.op.spec().output_shape(s);
    return s;
  }

  Tensor infer(const Tensor& x, SpikeRecorder* recorder) const override {
    Tensor y = x;
    for (const auto& st : stages_) y = st.lif.infer(st.conv.infer(y), recorder);
    return y;
  }

  Tensor forward_train(const Tensor& x, const TrainOptions& opts) override {
    Tensor y = x;
    for (auto& st : stages_) y = st.lif.forward_train(st.conv.forward_train(y), opts);
    return y;
  }

  Tensor calibrate(const Tensor& x) override {
    Tensor y = x;
    for (auto& st : stages_) y = st.lif.infer(st.conv.calibrate(y), nullptr);
    return y;
  }

  Tensor backward(const Tensor& grad_out) override {
    Tensor g = grad_out;
    for (auto it = stages_.rbegin(); it != stages_.rend(); ++it) g = it->conv.backward(it->lif.backward(g));
    return g;
  }

  void collect(std::vector<Param*>& out) override {
    for (auto& st : stages_) st.conv.collect(out);
  }

  std::unique_ptr<Block> clone() const override { return std::make_unique<ChainBlock>(*this); }

  void init(Rng& rng) override {
    for (auto& st : stages_) st.conv.op.init(rng);
  }

 private:
  std::string name_;
  std::vector<Stage<Op>> stages_;
};

class ResidualBlock final : public Block {
 public:
  ResidualBlock(const BlockSpec& spec, const LifParams& lif) : name_(spec.name) {
    const auto& c = spec.convs;
    for (std::size_t i = 0; i < 3; ++i) {
      const std::string p = name_ + ".conv" + std::to_string(i + 1);
      main_[i] = ConvBn<Conv2d>(Conv2d(p, c[i]), TdBN(p + ".bn", c[i].out_channels, 1.0, lif.v_th));
    }
    lif1_.lif = lif;
    lif2_.lif = lif;
    out_lif_.lif = lif;
    if (spec.shortcut) {
      const std::string p = name_ + ".shortcut";
      shortcut_.emplace(Conv2d(p, *spec.shortcut), TdBN(p + ".bn", spec.shortcut->out_channels, 1.0, lif.v_th));
    }
  }

  const std::string& name() const override { return name_; }

  Shape3 output_shape(const Shape3& in) const override {
    Shape3 s = in;
    for (const auto& m : main_) s = m.op.spec().output_shape(s);
    const Shape3 skip = shortcut_ ? shortcut_->op.spec().output_shape(in) : in;
    if (skip != s) throw ShapeError(name_ + ": identity shortcut needs matching shapes");
    return s;
  }

  Tensor infer(const Tensor& x, SpikeRecorder* recorder) const override {
    Tensor h = lif1_.infer(main_[0].infer(x), recorder);
    h = lif2_.infer(main_[1].infer(h), recorder);
    h = main_[2].infer(h);
    h += shortcut_ ? shortcut_->infer(x) : x;
    return out_lif_.infer(h, recorder);
  }

  Tensor forward_train(const Tensor& x, const TrainOptions& opts) override {
    Tensor h = lif1_.forward_train(main_[0].forward_train(x), opts);
    h = lif2_.forward_train(main_[1].forward_train(h), opts);
    h = main_[2].forward_train(h);
    h += shortcut_ ? shortcut_->forward_train(x) : x;
    return out_lif_.forward_train(h, opts);
  }

  Tensor calibrate(const Tensor& x) override {
    Tensor h = lif1_.infer(main_[0].calibrate(x), nullptr);
    h = lif2_.infer(main_[1].calibrate(h), nullptr);
    h = main_[2].calibrate(h);
    h += shortcut_ ? shortcut_->calibrate(x) : x;
    return out_lif_.infer(h, nullptr);
  }

  Tensor backward(const Tensor& grad_out) override {
    const Tensor g = out_lif_.backward(grad_out);
    Tensor gm = main_[2].backward(g);
    gm = main_[1].backward(lif2_.backward(gm));
    gm = main_[0].backward(lif1_.backward(gm));
    gm += shortcut_ ? shortcut_->backward(g) : g;
    return gm;
  }

  void collect(std::vector<Param*>& out) override {
    for (auto& m : main_) m.collect(out);
    if (shortcut_) shortcut_->collect(out);
  }

  std::unique_ptr<Block> clone() const override { return std::make_unique<ResidualBlock>(*this); }

  void init(Rng& rng) override {
    for (auto& m : main_) m.op.init(rng);
    if (shortcut_) shortcut_->op.init(rng);
  }

 private:
  std::string name_;
  ConvBn<Conv2d> main_[3];
  std::optional<ConvBn<Conv2d>> shortcut_;
  LifNode lif1_, lif2_, out_lif_;
};

}  // namespace

std::unique_ptr<Block> make_block(const BlockSpec& spec, const LifParams& lif) {
  switch (spec.kind) {
    case BlockKind::residual:
      return std::make_unique<ResidualBlock>(spec, lif);
    case BlockKind::stem:
    case BlockKind::separable: {
      auto block = std::make_unique<ChainBlock<Conv2d>>(spec.name);
      for (std::size_t i = 0; i < spec.convs.size(); ++i) {
        const std::string p = spec.name + ".conv" + std::to_string(i + 1);
        std::optional<TdBN> bn;
        if (spec.tdbn) bn.emplace(p + ".bn", spec.convs[i].out_channels, 1.0, lif.v_th);
        block->add_stage(Conv2d(p, spec.convs[i]), std::move(bn), lif);
      }
      return block;
    }
  }
  throw std::invalid_argument("unsupported block kind");
}

std::unique_ptr<Block> make_encoder(const BottleneckConfig& cfg, const LifParams& lif) {
  auto block = std::make_unique<ChainBlock<Conv2d>>("encoder");
  block->add_stage(Conv2d("encoder.conv", cfg.encoder), TdBN("encoder.bn", cfg.out_shape.c, 1.0, lif.v_th), lif);
  return block;
}

std::unique_ptr<Block> make_decoder(const BottleneckConfig& cfg, const LifParams& lif) {
  auto block = std::make_unique<ChainBlock<ConvTranspose2d>>("decoder");
  block->add_stage(ConvTranspose2d("decoder.deconv", cfg.decoder), TdBN("decoder.bn", cfg.in_shape.c, 1.0, lif.v_th),
                   lif);
  return block;
}

Model::Model(const Model& other)
    : arch_(other.arch_),
      head_(other.head_),
      head_cache_(other.head_cache_),
      bottleneck_(other.bottleneck_),
      bottleneck_split_(other.bottleneck_split_),
      trained_forward_(other.trained_forward_) {
  sequence_.reserve(other.sequence_.size());
  for (const auto& b : other.sequence_) sequence_.push_back(b->clone());
}

Model& Model::operator=(const Model& other) {
  if (this != &other) {
    Model copy(other);
    *this = std::move(copy);
  }
  return *this;
}

Model Model::build(const ArchitectureSpec& arch, std::uint64_t seed) {
  Model m;
  m.arch_ = arch;
  m.sequence_.push_back(make_block(arch.stem, arch.lif));
  for (const auto& b : arch.blocks) m.sequence_.push_back(make_block(b, arch.lif));
  m.head_ = Head("head", arch.blocks.back().output_shape.c, arch.classes);
  Rng rng(seed);
  for (auto& b : m.sequence_) b->init(rng);
  m.head_.init(rng);
  return m;
}

void Model::remove_bottleneck() {
  if (!bottleneck_) return;
  const std::size_t pos = bottleneck_split_ + 1;
  sequence_.erase(sequence_.begin() + static_cast<std::ptrdiff_t>(pos),
                  sequence_.begin() + static_cast<std::ptrdiff_t>(pos + 2));
  bottleneck_.reset();
  bottleneck_split_ = 0;
}

void Model::insert_bottleneck(std::size_t split, const BottleneckConfig& cfg, std::uint64_t seed) {
  arch_.check_split(split);
  if (cfg.in_shape != arch_.split_shape(split)) {
    throw ShapeError("bottleneck input " + to_string(cfg.in_shape) + " does not match split " +
                     std::to_string(split) + " feature " + to_string(arch_.split_shape(split)));
  }
  remove_bottleneck();
  auto enc = make_encoder(cfg, arch_.lif);
  auto dec = make_decoder(cfg, arch_.lif);
  Rng rng(seed);
  enc->init(rng);
  dec->init(rng);
  const auto pos = static_cast<std::ptrdiff_t>(split + 1);
  sequence_.insert(sequence_.begin() + pos, std::move(dec));
  sequence_.insert(sequence_.begin() + pos, std::move(enc));
  bottleneck_ = cfg;
  bottleneck_split_ = split;
}

std::size_t Model::split_end(std::size_t split) const {
  arch_.check_split(split);
  return split + 1 + (bottleneck_ && bottleneck_split_ < split ? 2 : 0);
}

std::size_t Model::edge_end(std::size_t split) const {
  return split_end(split) + (bottleneck_ && bottleneck_split_ == split ? 1 : 0);
}

Shape3 Model::transmitted_shape(std::size_t split) const {
  if (bottleneck_ && bottleneck_split_ == split) return bottleneck_->out_shape;
  return arch_.split_shape(split);
}

Tensor Model::infer(const Tensor& image, std::size_t timesteps, SpikeRecorder* recorder) const {
  Tensor x = encode_static(image, timesteps);
  for (const auto& b : sequence_) x = b->infer(x, recorder);
  return head_.infer(x);
}

Tensor Model::run_edge(const Tensor& image, std::size_t timesteps, std::size_t split,
                       SpikeRecorder* recorder) const {
  const std::size_t backbone_end = split_end(split);
  const std::size_t end = edge_end(split);
  Tensor x = encode_static(image, timesteps);
  for (std::size_t pos = 0; pos < end; ++pos) x = sequence_[pos]->infer(x, pos < backbone_end ? recorder : nullptr);
  return x;
}

Tensor Model::run_cloud(const Tensor& spikes, std::size_t split) const {
  const Shape5 s = spikes.shape5();
  if (s.feature() != transmitted_shape(split)) {
    throw ShapeError("cloud half at split " + std::to_string(split) + " expects " +
                     to_string(transmitted_shape(split)) + ", got " + to_string(s.feature()));
  }
  Tensor x = spikes;
  for (std::size_t pos = edge_end(split); pos < sequence_.size(); ++pos) x = sequence_[pos]->infer(x, nullptr);
  return head_.infer(x);
}

Tensor Model::forward_train(const Tensor& image, std::size_t timesteps, const TrainOptions& opts) {
  Tensor x = encode_static(image, timesteps);
  for (auto& b : sequence_) x = b->forward_train(x, opts);
  trained_forward_ = true;
  return head_.forward_train(x, head_cache_);
}

void Model::calibrate_statistics(const Tensor& images, std::size_t timesteps) {
  Tensor x = encode_static(images, timesteps);
  for (auto& b : sequence_) x = b->calibrate(x);
}

void Model::backward(const Tensor& grad_logits) {
  if (!trained_forward_) throw StateError("backward requires a preceding forward_train");
  Tensor g = head_.backward(head_cache_, grad_logits);
  for (auto it = sequence_.rbegin(); it != sequence_.rend(); ++it) g = (*it)->backward(g);
}

std::vector<Param*> Model::parameters() {
  std::vector<Param*> out;
  for (auto& b : sequence_) b->collect(out);
  head_.collect(out);
  return out;
}

std::vector<const Param*> Model::parameters() const {
  auto params = const_cast<Model*>(this)->parameters();
  return {params.begin(), params.end()};
}

void Model::zero_grad() {
  for (Param* p : parameters()) p->zero_grad();
}

}  // namespace spikesplit
