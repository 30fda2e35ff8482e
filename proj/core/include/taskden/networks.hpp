#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "taskden/checkpoint.hpp"
#include "taskden/image.hpp"
#include "taskden/ops.hpp"
#include "taskden/parameter.hpp"

namespace taskden {

inline constexpr Real kLeakySlope = Real(0.2);

enum class SegmenterKind { unet_small, plain_cnn, residual_cnn, dilated_cnn };

const char* segmenter_name(SegmenterKind kind);
/// Throws std::invalid_argument for an unknown name.
SegmenterKind parse_segmenter_kind(const std::string& name);
inline constexpr SegmenterKind kAllSegmenters[] = {SegmenterKind::unet_small, SegmenterKind::plain_cnn,
                                                   SegmenterKind::residual_cnn, SegmenterKind::dilated_cnn};

/// Architecture description; enough to rebuild a network before loading
/// its checkpoint. Serialized into the plain-text sidecar next to it.
struct NetworkSpec {
    std::string kind;  // denoiser | critic | perceptual | one of the segmenter names
    std::vector<std::size_t> channels;
    std::size_t kernel = 3;

    std::string to_text() const;
    static NetworkSpec parse(const std::string& text);
    /// SHA-256 of to_text().
    std::string hash() const;
};

NetworkSpec default_denoiser_spec();
NetworkSpec default_critic_spec();
NetworkSpec segmenter_spec(SegmenterKind kind);
NetworkSpec perceptual_spec();

/// Parameterized composition of layers with named parameters, batch-norm
/// buffers, a training/eval mode and a frozen flag.
class Network {
public:
    explicit Network(NetworkSpec spec) : spec_(std::move(spec)) {}
    virtual ~Network() = default;
    Network(const Network&) = delete;
    Network& operator=(const Network&) = delete;

    virtual Tensor forward(const Tensor& input) = 0;
    Tensor operator()(const Tensor& input) { return forward(input); }

    const NetworkSpec& spec() const { return spec_; }
    const std::string& kind() const { return spec_.kind; }
    /// Ordered human-readable layer list, e.g. "conv2d(1->32,k3,s2,p1)".
    const std::vector<std::string>& layers() const { return layers_; }

    std::vector<Parameter*> parameters();
    std::size_t parameter_count() const;

    void set_training(bool training) { training_ = training; }
    bool training() const { return training_; }

    /// Stops all gradient accumulation into the parameters; gradients still
    /// flow through the network to its input. Irreversible.
    void freeze();
    bool frozen() const { return frozen_; }

    /// Parameters followed by buffers, converted to 32-bit floats.
    std::vector<NamedTensor> state() const;
    /// Strict load: every record must match a parameter or buffer by name and shape.
    void load_state(const std::vector<NamedTensor>& records);
    /// SHA-256 over the encoded state; bitwise parameter identity check.
    std::string checksum() const;

protected:
    Parameter& add_parameter(const std::string& name, Tensor value);
    Tensor& add_buffer(const std::string& name, Tensor value);
    void add_layer(std::string description) { layers_.push_back(std::move(description)); }

private:
    NetworkSpec spec_;
    std::deque<Parameter> params_;
    std::deque<std::pair<std::string, Tensor>> buffers_;
    std::vector<std::string> layers_;
    bool training_ = true;
    bool frozen_ = false;
};

/// Residual CNN: output = input + f(input). `spec.channels` lists the output
/// channels of each conv layer and must end in 1; leaky ReLU between layers,
/// no activation after the last one and no output clamp.
std::unique_ptr<Network> build_denoiser(const NetworkSpec& spec, std::uint64_t seed);
std::unique_ptr<Network> build_denoiser(std::uint64_t seed);

/// Wasserstein critic: stride-2 conv + batch norm + leaky ReLU blocks,
/// global average pooling and a dense layer to one unbounded score.
std::unique_ptr<Network> build_discriminator(const NetworkSpec& spec, std::uint64_t seed);
std::unique_ptr<Network> build_discriminator(std::uint64_t seed);

/// Per-pixel foreground probability (sigmoid output, same H x W as input).
std::unique_ptr<Network> build_segmenter(SegmenterKind kind, std::uint64_t seed);

/// Fixed random conv feature extractor for the perceptual loss; returned frozen.
std::unique_ptr<Network> build_perceptual_net(std::uint64_t seed);

/// Dispatches on spec.kind.
std::unique_ptr<Network> build_network(const NetworkSpec& spec, std::uint64_t seed);

/// Writes `path` (TODN checkpoint) and `path`.arch (spec text + config hash).
void save_network(const Network& net, const std::filesystem::path& path);
/// Rebuilds the architecture from the sidecar and loads the weights.
std::unique_ptr<Network> load_network(const std::filesystem::path& path);

/// Converts a [0,1] image to a 1 x 1 x H x W tensor and back.
Tensor image_to_tensor(const Image& image);
Tensor stack_images(const std::vector<const Image*>& images);
Image tensor_to_image(const Tensor& t, std::size_t index = 0);

}  // namespace taskden
