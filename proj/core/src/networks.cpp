#include "taskden/networks.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "taskden/hash.hpp"

namespace taskden {

namespace {

std::string join(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

std::vector<std::size_t> split_sizes(const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(std::stoul(item));
    }
    return out;
}

struct ConvLayer {
    Parameter* weight = nullptr;
    Parameter* bias = nullptr;
    Conv2dOptions opts;

    Tensor operator()(const Tensor& x) const { return conv2d(x, weight->tensor, bias->tensor, opts); }
};

struct BatchNormLayer {
    Parameter* gamma = nullptr;
    Parameter* beta = nullptr;
    Tensor* running_mean = nullptr;
    Tensor* running_var = nullptr;

    Tensor operator()(const Tensor& x, bool training) const {
        return batch_norm2d(x, gamma->tensor, beta->tensor, *running_mean, *running_var, training);
    }
};

struct DenseLayer {
    Parameter* weight = nullptr;
    Parameter* bias = nullptr;

    Tensor operator()(const Tensor& x) const { return dense(x, weight->tensor, bias->tensor); }
};

// Shared layer constructors. Weights use fan-in (Kaiming) scaling drawn from
// one RNG stream in declaration order, biases start at zero.
class ConvNet : public Network {
public:
    ConvNet(NetworkSpec spec, std::uint64_t seed) : Network(std::move(spec)), rng_(seed) {}

protected:
    ConvLayer conv(const std::string& name, std::size_t in, std::size_t out, std::size_t kernel,
                   std::size_t stride = 1, std::size_t dilation = 1, double init_gain = 1.0) {
        const std::size_t padding = dilation * (kernel / 2);
        Tensor w(Shape{out, in, kernel, kernel});
        const double std_dev = init_gain * std::sqrt(2.0 / static_cast<double>(in * kernel * kernel));
        std::normal_distribution<double> dist(0.0, std_dev);
        for (Real& v : w.data()) v = static_cast<Real>(dist(rng_));
        ConvLayer layer{&add_parameter(name + ".weight", std::move(w)), &add_parameter(name + ".bias", Tensor(Shape{out})),
                        Conv2dOptions{stride, padding, dilation}};
        std::ostringstream d;
        d << "conv2d(" << in << "->" << out << ",k" << kernel << ",s" << stride << ",p" << padding;
        if (dilation != 1) d << ",d" << dilation;
        d << ")";
        add_layer(d.str());
        return layer;
    }

    BatchNormLayer batch_norm(const std::string& name, std::size_t channels) {
        BatchNormLayer layer{&add_parameter(name + ".gamma", Tensor(Shape{channels}, Real(1))),
                             &add_parameter(name + ".beta", Tensor(Shape{channels})),
                             &add_buffer(name + ".running_mean", Tensor(Shape{channels})),
                             &add_buffer(name + ".running_var", Tensor(Shape{channels}, Real(1)))};
        add_layer("batch_norm2d(" + std::to_string(channels) + ")");
        return layer;
    }

    DenseLayer linear(const std::string& name, std::size_t in, std::size_t out) {
        Tensor w(Shape{in, out});
        std::normal_distribution<double> dist(0.0, std::sqrt(1.0 / static_cast<double>(in)));
        for (Real& v : w.data()) v = static_cast<Real>(dist(rng_));
        DenseLayer layer{&add_parameter(name + ".weight", std::move(w)), &add_parameter(name + ".bias", Tensor(Shape{out}))};
        add_layer("dense(" + std::to_string(in) + "->" + std::to_string(out) + ")");
        return layer;
    }

    // Sigmoid heads start at zero so every segmenter begins at p = 0.5
    // instead of a saturated output.
    ConvLayer sigmoid_head(const std::string& name, std::size_t in, std::size_t kernel) {
        return conv(name, in, 1, kernel, 1, 1, 0.0);
    }

    static Tensor act(const Tensor& x) { return leaky_relu(x, kLeakySlope); }

private:
    std::mt19937_64 rng_;
};

class Denoiser final : public ConvNet {
public:
    Denoiser(const NetworkSpec& spec, std::uint64_t seed) : ConvNet(spec, seed) {
        if (spec.channels.empty() || spec.channels.back() != 1) {
            throw std::invalid_argument("denoiser channels must end with 1 for the residual output");
        }
        if (spec.kernel % 2 == 0) throw std::invalid_argument("denoiser kernel must be odd");
        std::size_t in = 1;
        for (std::size_t i = 0; i < spec.channels.size(); ++i) {
            convs_.push_back(conv("conv" + std::to_string(i), in, spec.channels[i], spec.kernel));
            if (i + 1 < spec.channels.size()) add_layer("leaky_relu(0.2)");
            in = spec.channels[i];
        }
        add_layer("residual_add(input)");
    }

    Tensor forward(const Tensor& input) override {
        Tensor h = input;
        for (std::size_t i = 0; i < convs_.size(); ++i) {
            h = convs_[i](h);
            if (i + 1 < convs_.size()) h = act(h);
        }
        return add(input, h);
    }

private:
    std::vector<ConvLayer> convs_;
};

class Critic final : public ConvNet {
public:
    Critic(const NetworkSpec& spec, std::uint64_t seed) : ConvNet(spec, seed) {
        std::size_t in = 1;
        for (std::size_t i = 0; i < spec.channels.size(); ++i) {
            const std::string name = "block" + std::to_string(i);
            convs_.push_back(conv(name + ".conv", in, spec.channels[i], spec.kernel, 2));
            norms_.push_back(batch_norm(name + ".bn", spec.channels[i]));
            add_layer("leaky_relu(0.2)");
            in = spec.channels[i];
        }
        add_layer("global_avg_pool2d");
        head_ = linear("head", in, 1);
    }

    Tensor forward(const Tensor& input) override {
        Tensor h = input;
        for (std::size_t i = 0; i < convs_.size(); ++i) h = act(norms_[i](convs_[i](h), training()));
        return head_(global_avg_pool2d(h));
    }

private:
    std::vector<ConvLayer> convs_;
    std::vector<BatchNormLayer> norms_;
    DenseLayer head_;
};

// Two-level encoder-decoder with skip connections; channels = {c1, c2, c3}.
// Every 3x3 conv is followed by batch norm and leaky ReLU.
class UNetSmall final : public ConvNet {
public:
    UNetSmall(const NetworkSpec& spec, std::uint64_t seed) : ConvNet(spec, seed) {
        const auto c1 = spec.channels.at(0), c2 = spec.channels.at(1), c3 = spec.channels.at(2);
        enc1_ = {unit("enc1.a", 1, c1), unit("enc1.b", c1, c1)};
        add_layer("avg_pool2d(2)");
        enc2_ = {unit("enc2.a", c1, c2), unit("enc2.b", c2, c2)};
        add_layer("avg_pool2d(2)");
        mid_ = {unit("bottleneck.a", c2, c3), unit("bottleneck.b", c3, c3)};
        add_layer("upsample_nearest2d(2)+concat(enc2)");
        dec2_ = {unit("dec2.a", c3 + c2, c2), unit("dec2.b", c2, c2)};
        add_layer("upsample_nearest2d(2)+concat(enc1)");
        dec1_ = {unit("dec1.a", c2 + c1, c1), unit("dec1.b", c1, c1)};
        head_ = sigmoid_head("head", c1, 1);
        add_layer("sigmoid");
    }

    Tensor forward(const Tensor& x) override {
        if (x.rank() != 4 || x.dim(2) % 4 != 0 || x.dim(3) % 4 != 0) {
            throw ShapeError("unet_small: spatial extents of " + shape_string(x.shape()) + " must be divisible by 4");
        }
        Tensor e1 = apply(enc1_, x);
        Tensor e2 = apply(enc2_, avg_pool2d(e1, 2));
        Tensor m = apply(mid_, avg_pool2d(e2, 2));
        Tensor d2 = apply(dec2_, concat_channels(upsample_nearest2d(m, 2), e2));
        Tensor d1 = apply(dec1_, concat_channels(upsample_nearest2d(d2, 2), e1));
        return sigmoid(head_(d1));
    }

private:
    struct Unit {
        ConvLayer conv;
        BatchNormLayer norm;
    };
    using Stage = std::pair<Unit, Unit>;

    Unit unit(const std::string& name, std::size_t in, std::size_t out) {
        Unit u{conv(name + ".conv", in, out, spec().kernel), batch_norm(name + ".bn", out)};
        add_layer("leaky_relu(0.2)");
        return u;
    }

    Tensor apply(const Stage& s, const Tensor& x) const {
        Tensor h = act(s.first.norm(s.first.conv(x), training()));
        return act(s.second.norm(s.second.conv(h), training()));
    }

    Stage enc1_, enc2_, mid_, dec2_, dec1_;
    ConvLayer head_;
};

// Plain stack of same-resolution convolutions; channels = widths of the hidden layers.
class PlainCnn final : public ConvNet {
public:
    PlainCnn(const NetworkSpec& spec, std::uint64_t seed, std::vector<std::size_t> dilations = {})
        : ConvNet(spec, seed) {
        std::size_t in = 1;
        for (std::size_t i = 0; i < spec.channels.size(); ++i) {
            const std::size_t d = i < dilations.size() ? dilations[i] : 1;
            convs_.push_back(conv("conv" + std::to_string(i), in, spec.channels[i], spec.kernel, 1, d));
            add_layer("leaky_relu(0.2)");
            in = spec.channels[i];
        }
        convs_.push_back(sigmoid_head("head", in, spec.kernel));
        add_layer("sigmoid");
    }

    Tensor forward(const Tensor& x) override {
        Tensor h = x;
        for (std::size_t i = 0; i + 1 < convs_.size(); ++i) h = act(convs_[i](h));
        return sigmoid(convs_.back()(h));
    }

private:
    std::vector<ConvLayer> convs_;
};

// Stem conv, residual blocks (conv-act-conv + identity), 1-channel head.
// channels = {width, blocks}.
class ResidualCnn final : public ConvNet {
public:
    ResidualCnn(const NetworkSpec& spec, std::uint64_t seed) : ConvNet(spec, seed) {
        const std::size_t width = spec.channels.at(0), blocks = spec.channels.at(1);
        stem_ = conv("stem", 1, width, spec.kernel);
        add_layer("leaky_relu(0.2)");
        for (std::size_t b = 0; b < blocks; ++b) {
            const std::string name = "block" + std::to_string(b);
            blocks_.push_back({conv(name + ".conv_a", width, width, spec.kernel),
                               conv(name + ".conv_b", width, width, spec.kernel)});
            add_layer("residual_add+leaky_relu(0.2)");
        }
        head_ = sigmoid_head("head", width, spec.kernel);
        add_layer("sigmoid");
    }

    Tensor forward(const Tensor& x) override {
        Tensor h = act(stem_(x));
        for (const auto& [a, b] : blocks_) h = act(add(h, b(act(a(h)))));
        return sigmoid(head_(h));
    }

private:
    ConvLayer stem_, head_;
    std::vector<std::pair<ConvLayer, ConvLayer>> blocks_;
};

class PerceptualNet final : public ConvNet {
public:
    PerceptualNet(const NetworkSpec& spec, std::uint64_t seed) : ConvNet(spec, seed) {
        std::size_t in = 1;
        for (std::size_t i = 0; i < spec.channels.size(); ++i) {
            convs_.push_back(conv("conv" + std::to_string(i), in, spec.channels[i], spec.kernel));
            add_layer("leaky_relu(0.2)");
            in = spec.channels[i];
        }
    }

    Tensor forward(const Tensor& x) override {
        Tensor h = x;
        for (const auto& c : convs_) h = act(c(h));
        return h;
    }

private:
    std::vector<ConvLayer> convs_;
};

const std::vector<std::size_t> kDilatedRates = {1, 2, 4, 8};

}  // namespace

// --- Network ---------------------------------------------------------------

std::vector<Parameter*> Network::parameters() {
    std::vector<Parameter*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(&p);
    return out;
}

std::size_t Network::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.numel();
    return n;
}

void Network::freeze() {
    for (auto& p : params_) {
        p.tensor.zero_grad();
        p.tensor.set_requires_grad(false);
    }
    frozen_ = true;
}

Parameter& Network::add_parameter(const std::string& name, Tensor value) {
    params_.emplace_back(name, std::move(value));
    return params_.back();
}

Tensor& Network::add_buffer(const std::string& name, Tensor value) {
    buffers_.emplace_back(name, std::move(value));
    return buffers_.back().second;
}

std::vector<NamedTensor> Network::state() const {
    std::vector<NamedTensor> out;
    auto push = [&](const std::string& name, const Tensor& t) {
        NamedTensor r{name, t.shape(), {}};
        r.values.assign(t.data().begin(), t.data().end());
        out.push_back(std::move(r));
    };
    for (const auto& p : params_) push(p.name, p.tensor);
    for (const auto& [name, t] : buffers_) push(name, t);
    return out;
}

void Network::load_state(const std::vector<NamedTensor>& records) {
    std::map<std::string, const NamedTensor*> by_name;
    for (const auto& r : records) by_name[r.name] = &r;
    auto assign = [&](const std::string& name, Tensor& t) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw IoError("checkpoint is missing '" + name + "'");
        if (it->second->shape != t.shape()) {
            throw IoError("checkpoint record '" + name + "' has shape " + shape_string(it->second->shape) +
                          ", network expects " + shape_string(t.shape()));
        }
        auto dst = t.data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<Real>(it->second->values[i]);
        by_name.erase(it);
    };
    for (auto& p : params_) assign(p.name, p.tensor);
    for (auto& [name, t] : buffers_) assign(name, t);
    if (!by_name.empty()) throw IoError("checkpoint has unexpected record '" + by_name.begin()->first + "'");
}

std::string Network::checksum() const { return sha256_hex(encode_checkpoint(state())); }

// --- specs -----------------------------------------------------------------

std::string NetworkSpec::to_text() const {
    return "kind=" + kind + "\nchannels=" + join(channels) + "\nkernel=" + std::to_string(kernel) + "\n";
}

NetworkSpec NetworkSpec::parse(const std::string& text) {
    NetworkSpec spec;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
        if (key == "kind") spec.kind = value;
        else if (key == "channels") spec.channels = split_sizes(value);
        else if (key == "kernel") spec.kernel = std::stoul(value);
    }
    if (spec.kind.empty()) throw IoError("network spec has no kind");
    return spec;
}

std::string NetworkSpec::hash() const { return sha256_hex(to_text()); }

NetworkSpec default_denoiser_spec() { return {"denoiser", {32, 64, 64, 32, 1}, 3}; }
NetworkSpec default_critic_spec() { return {"critic", {32, 64, 128}, 3}; }
NetworkSpec perceptual_spec() { return {"perceptual", {8, 8, 8}, 3}; }

NetworkSpec segmenter_spec(SegmenterKind kind) {
    switch (kind) {
        case SegmenterKind::unet_small: return {"unet_small", {8, 16, 32}, 3};
        case SegmenterKind::plain_cnn: return {"plain_cnn", {16, 16, 16, 16}, 3};
        case SegmenterKind::residual_cnn: return {"residual_cnn", {12, 3}, 3};
        case SegmenterKind::dilated_cnn: return {"dilated_cnn", {12, 12, 12, 12}, 3};
    }
    throw std::invalid_argument("unknown segmenter kind");
}

const char* segmenter_name(SegmenterKind kind) {
    switch (kind) {
        case SegmenterKind::unet_small: return "unet_small";
        case SegmenterKind::plain_cnn: return "plain_cnn";
        case SegmenterKind::residual_cnn: return "residual_cnn";
        case SegmenterKind::dilated_cnn: return "dilated_cnn";
    }
    return "?";
}

SegmenterKind parse_segmenter_kind(const std::string& name) {
    for (SegmenterKind k : kAllSegmenters) {
        if (name == segmenter_name(k)) return k;
    }
    throw std::invalid_argument("unknown segmenter kind '" + name + "'");
}

// --- builders --------------------------------------------------------------

std::unique_ptr<Network> build_denoiser(const NetworkSpec& spec, std::uint64_t seed) {
    return std::make_unique<Denoiser>(spec, seed);
}
std::unique_ptr<Network> build_denoiser(std::uint64_t seed) { return build_denoiser(default_denoiser_spec(), seed); }

std::unique_ptr<Network> build_discriminator(const NetworkSpec& spec, std::uint64_t seed) {
    return std::make_unique<Critic>(spec, seed);
}
std::unique_ptr<Network> build_discriminator(std::uint64_t seed) {
    return build_discriminator(default_critic_spec(), seed);
}

std::unique_ptr<Network> build_segmenter(SegmenterKind kind, std::uint64_t seed) {
    return build_network(segmenter_spec(kind), seed);
}

std::unique_ptr<Network> build_perceptual_net(std::uint64_t seed) { return build_network(perceptual_spec(), seed); }

std::unique_ptr<Network> build_network(const NetworkSpec& spec, std::uint64_t seed) {
    if (spec.kind == "denoiser") return build_denoiser(spec, seed);
    if (spec.kind == "critic") return build_discriminator(spec, seed);
    if (spec.kind == "perceptual") {
        auto net = std::make_unique<PerceptualNet>(spec, seed);
        net->freeze();
        net->set_training(false);
        return net;
    }
    switch (parse_segmenter_kind(spec.kind)) {
        case SegmenterKind::unet_small: return std::make_unique<UNetSmall>(spec, seed);
        case SegmenterKind::plain_cnn: return std::make_unique<PlainCnn>(spec, seed);
        case SegmenterKind::residual_cnn: return std::make_unique<ResidualCnn>(spec, seed);
        case SegmenterKind::dilated_cnn: return std::make_unique<PlainCnn>(spec, seed, kDilatedRates);
    }
    throw std::invalid_argument("unknown network kind '" + spec.kind + "'");
}

void save_network(const Network& net, const std::filesystem::path& path) {
    save_checkpoint(path, net.state());
    std::filesystem::path sidecar = path;
    sidecar += ".arch";
    const std::string text = net.spec().to_text() + "config_hash=" + net.spec().hash() +
                             "\nparameter_count=" + std::to_string(net.parameter_count()) + "\n";
    write_file_atomic(sidecar, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::unique_ptr<Network> load_network(const std::filesystem::path& path) {
    std::filesystem::path sidecar = path;
    sidecar += ".arch";
    const auto bytes = read_file_bytes(sidecar);
    const NetworkSpec spec = NetworkSpec::parse(std::string(bytes.begin(), bytes.end()));
    auto net = build_network(spec, 0);
    net->load_state(load_checkpoint(path));
    return net;
}

// --- image/tensor conversion ----------------------------------------------

Tensor image_to_tensor(const Image& image) { return stack_images({&image}); }

Tensor stack_images(const std::vector<const Image*>& images) {
    if (images.empty()) throw ShapeError("stack_images: empty batch");
    const std::size_t h = images[0]->height, w = images[0]->width;
    Tensor t(Shape{images.size(), 1, h, w});
    auto dst = t.data();
    for (std::size_t n = 0; n < images.size(); ++n) {
        if (images[n]->height != h || images[n]->width != w) throw ShapeError("stack_images: mixed image sizes");
        for (std::size_t i = 0; i < h * w; ++i) dst[n * h * w + i] = static_cast<Real>(images[n]->pixels[i]);
    }
    return t;
}

Image tensor_to_image(const Tensor& t, std::size_t index) {
    if (t.rank() != 4 || t.dim(1) != 1 || index >= t.dim(0)) {
        throw ShapeError("tensor_to_image: expected N x 1 x H x W, got " + shape_string(t.shape()));
    }
    Image img(t.dim(2), t.dim(3));
    auto src = t.data();
    for (std::size_t i = 0; i < img.size(); ++i) img.pixels[i] = static_cast<double>(src[index * img.size() + i]);
    return img;
}

}  // namespace taskden
