#pragma once

#include <cstdint>
#include <string>

#include "taskden/networks.hpp"
#include "taskden/tensor.hpp"

namespace taskden {

enum class LossName { critic, gan, mse, l1, task, perceptual, total_g };

const char* loss_name(LossName name);

/// A graph-attached scalar (shape {1}) loss.
struct LossValue {
    Tensor value;
    LossName name;

    double item() const { return static_cast<double>(value.item()); }
};

inline constexpr Real kDiceSmoothing = Real(1e-5);

/// How fidelity losses reduce over elements. `mean` averages every element;
/// `per_image_sum` sums over each sample's elements (the unnormalized norm)
/// and averages over the batch, which keeps the weight of a fidelity term
/// relative to the Dice-based task loss independent of image size.
enum class Reduction { mean, per_image_sum };
const char* reduction_name(Reduction r);
Reduction parse_reduction(const std::string& name);

/// -(mean D(real) - mean D(fake)). Minimizing it widens the critic's score
/// gap. `fake` must already be detached from the generator graph.
LossValue critic_loss(Network& critic, const Tensor& real, const Tensor& fake);

/// -mean D(fake). The critic's parameters receive no gradient: their
/// requires_grad flag is lowered for the duration of the forward pass.
LossValue generator_gan_loss(Network& critic, const Tensor& fake);

/// 0.5 * mean((x_hat - x_star)^2), or 0.5 * ||x_hat - x_star||^2 per sample
/// averaged over the batch.
LossValue mse_loss(const Tensor& x_hat, const Tensor& x_star, Reduction reduction = Reduction::mean);

/// mean |x_hat - x_star|, or ||x_hat - x_star||_1 per sample averaged over
/// the batch.
LossValue l1_loss(const Tensor& x_hat, const Tensor& x_star, Reduction reduction = Reduction::mean);

/// 1 - (2 sum(p m) + s) / (sum p + sum m + s), s = kDiceSmoothing.
LossValue soft_dice_loss(const Tensor& probs, const Tensor& mask);

/// soft_dice_loss(T(x_hat), mask). Throws std::logic_error unless T is frozen.
LossValue task_oriented_loss(Network& segmenter, const Tensor& x_hat, const Tensor& mask);

/// mse_loss(f(x_hat), f(x_star), reduction). Throws std::logic_error unless f is frozen.
LossValue perceptual_loss(Network& features, const Tensor& x_hat, const Tensor& x_star,
                          Reduction reduction = Reduction::mean);

/// gan + task + lambda * mse.
LossValue generator_total_loss(const LossValue& gan, const LossValue& task, const LossValue& mse, Real lambda);

/// Number of task_oriented_loss evaluations in this process.
std::uint64_t task_loss_evaluations();

}  // namespace taskden
