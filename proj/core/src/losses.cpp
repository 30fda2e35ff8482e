#include "taskden/losses.hpp"

#include <atomic>
#include <stdexcept>

#include "taskden/ops.hpp"

namespace taskden {

namespace {

std::atomic<std::uint64_t> g_task_evaluations{0};

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
    }
}

void require_batch(const Tensor& t, const char* what) {
    if (!t.defined() || t.rank() == 0 || t.dim(0) == 0) throw ShapeError(std::string(what) + ": empty batch");
}

// Lowers requires_grad on a network's parameters for one scope so a forward
// pass does not attach them to the graph.
class DetachParameters {
public:
    explicit DetachParameters(Network& net) : params_(net.parameters()) {
        for (Parameter* p : params_) {
            flags_.push_back(p->tensor.requires_grad());
            p->tensor.set_requires_grad(false);
        }
    }
    ~DetachParameters() {
        for (std::size_t i = 0; i < params_.size(); ++i) params_[i]->tensor.set_requires_grad(flags_[i]);
    }
    DetachParameters(const DetachParameters&) = delete;
    DetachParameters& operator=(const DetachParameters&) = delete;

private:
    std::vector<Parameter*> params_;
    std::vector<bool> flags_;
};

Tensor reduce(const Tensor& elementwise, Reduction reduction) {
    if (reduction == Reduction::mean) return mean(elementwise);
    return scale(sum(elementwise), Real(1) / static_cast<Real>(elementwise.dim(0)));
}

}  // namespace

const char* reduction_name(Reduction r) { return r == Reduction::mean ? "mean" : "per_image_sum"; }

Reduction parse_reduction(const std::string& name) {
    if (name == "mean") return Reduction::mean;
    if (name == "per_image_sum") return Reduction::per_image_sum;
    throw std::invalid_argument("unknown reduction '" + name + "' (expected mean or per_image_sum)");
}

const char* loss_name(LossName name) {
    switch (name) {
        case LossName::critic: return "critic";
        case LossName::gan: return "gan";
        case LossName::mse: return "mse";
        case LossName::l1: return "l1";
        case LossName::task: return "task";
        case LossName::perceptual: return "perceptual";
        case LossName::total_g: return "total_g";
    }
    return "?";
}

LossValue critic_loss(Network& critic, const Tensor& real, const Tensor& fake) {
    require_batch(real, "critic_loss");
    require_batch(fake, "critic_loss");
    return {sub(mean(critic(fake)), mean(critic(real))), LossName::critic};
}

LossValue generator_gan_loss(Network& critic, const Tensor& fake) {
    require_batch(fake, "generator_gan_loss");
    DetachParameters guard(critic);
    return {scale(mean(critic(fake)), Real(-1)), LossName::gan};
}

LossValue mse_loss(const Tensor& x_hat, const Tensor& x_star, Reduction reduction) {
    require_same_shape(x_hat, x_star, "mse_loss");
    return {scale(reduce(square(sub(x_hat, x_star)), reduction), Real(0.5)), LossName::mse};
}

LossValue l1_loss(const Tensor& x_hat, const Tensor& x_star, Reduction reduction) {
    require_same_shape(x_hat, x_star, "l1_loss");
    return {reduce(abs(sub(x_hat, x_star)), reduction), LossName::l1};
}

LossValue soft_dice_loss(const Tensor& probs, const Tensor& mask) {
    require_same_shape(probs, mask, "soft_dice_loss");
    Tensor numerator = add_scalar(scale(sum(mul(probs, mask)), Real(2)), kDiceSmoothing);
    Tensor denominator = add_scalar(add(sum(probs), sum(mask)), kDiceSmoothing);
    return {add_scalar(scale(div(numerator, denominator), Real(-1)), Real(1)), LossName::task};
}

LossValue task_oriented_loss(Network& segmenter, const Tensor& x_hat, const Tensor& mask) {
    if (!segmenter.frozen()) throw std::logic_error("task_oriented_loss: segmenter must be frozen");
    ++g_task_evaluations;
    return soft_dice_loss(segmenter(x_hat), mask);
}

LossValue perceptual_loss(Network& features, const Tensor& x_hat, const Tensor& x_star, Reduction reduction) {
    if (!features.frozen()) throw std::logic_error("perceptual_loss: feature network must be frozen");
    require_same_shape(x_hat, x_star, "perceptual_loss");
    LossValue l = mse_loss(features(x_hat), features(x_star), reduction);
    l.name = LossName::perceptual;
    return l;
}

LossValue generator_total_loss(const LossValue& gan, const LossValue& task, const LossValue& mse, Real lambda) {
    return {add(add(gan.value, task.value), scale(mse.value, lambda)), LossName::total_g};
}

std::uint64_t task_loss_evaluations() { return g_task_evaluations.load(); }

}  // namespace taskden
