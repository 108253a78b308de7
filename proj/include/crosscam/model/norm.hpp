// Copyright 2026 The crosscam Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "crosscam/core/error.hpp"
#include "crosscam/core/nn_ops.hpp"

namespace crosscam::model {

/// Running moments of one normalization branch.
struct NormSlot {
    Tensor running_mean;
    Tensor running_var;
    bool initialized = false;

    explicit NormSlot(std::size_t channels = 0) : running_mean({channels}, 0.0), running_var({channels}, 1.0) {}

    /// running <- (1 - momentum) * running + momentum * batch
    void update(const ag::ChannelMoments& batch, double momentum) {
        for (std::size_t i = 0; i < running_mean.numel(); ++i) {
            running_mean[i] = (1.0 - momentum) * running_mean[i] + momentum * batch.mean[i];
            running_var[i] = (1.0 - momentum) * running_var[i] + momentum * batch.var[i];
        }
        initialized = true;
    }

    /// Explicit initialization from observed moments.
    void reset_to(const ag::ChannelMoments& batch) {
        running_mean = batch.mean;
        running_var = batch.var;
        initialized = true;
    }

    bool operator==(const NormSlot&) const = default;
};

enum class NormPhase { train, infer };

/// Batch normalization over all cameras ("global BN"). Normalizes per
/// dimension for [N, D] features and per channel over (N x spatial) for maps.
struct GlobalNormState {
    NormSlot slot;
    ag::Var gamma;
    ag::Var beta;
    double eps = 1e-5;
    double momentum = 0.1;

    static GlobalNormState create(std::size_t channels, double eps = 1e-5, double momentum = 0.1) {
        return {NormSlot(channels), ag::parameter(Tensor({channels}, 1.0)), ag::parameter(Tensor({channels}, 0.0)), eps, momentum};
    }
    std::size_t channels() const { return slot.running_mean.numel(); }
};

inline ag::Var global_bn(GlobalNormState& state, const ag::Var& feats, NormPhase phase) {
    if (phase == NormPhase::train) {
        if (feats.dim(0) < 2) throw NumericError("global_bn: training needs a batch of at least 2");
        ag::ChannelMoments m;
        ag::Var out = ag::batch_norm_train(feats, state.gamma, state.beta, state.eps, &m);
        state.slot.update(m, state.momentum);
        return out;
    }
    if (!state.slot.initialized) throw StateError("global_bn: inference before any training step");
    return ag::channel_affine_norm(feats, state.slot.running_mean, state.slot.running_var, state.gamma, state.beta, state.eps);
}

enum class AugmentMode { batch_stats, running_stats };

/// How the camera branches obtain their affine parameters.
enum class CsbnAffine {
    shared_with_global,  // read the global BN gamma/beta
    independent_frozen,  // fixed gamma = 1, beta = 0
};

/// Camera-specific batch normalization: one moment slot per camera and one
/// affine pair shared by every camera branch.
struct CameraNormState {
    std::vector<NormSlot> slots;
    ag::Var gamma;
    ag::Var beta;
    double eps = 1e-5;
    double momentum = 0.1;
    /// Number of csbn_augment calls; lets callers check the branch is idle.
    mutable std::size_t augment_calls = 0;

    static CameraNormState create(std::size_t cameras, std::size_t channels, ag::Var gamma, ag::Var beta,
                                  double eps = 1e-5, double momentum = 0.1) {
        CameraNormState s;
        s.slots.assign(cameras, NormSlot(channels));
        s.gamma = std::move(gamma);
        s.beta = std::move(beta);
        s.eps = eps;
        s.momentum = momentum;
        return s;
    }
    static CameraNormState create(std::size_t cameras, std::size_t channels, CsbnAffine affine, const GlobalNormState& global) {
        if (affine == CsbnAffine::shared_with_global)
            return create(cameras, channels, global.gamma, global.beta, global.eps, global.momentum);
        return create(cameras, channels, ag::constant(Tensor({channels}, 1.0)), ag::constant(Tensor({channels}, 0.0)), global.eps,
                      global.momentum);
    }

    std::size_t cameras() const { return slots.size(); }
    std::size_t channels() const { return gamma.numel(); }
};

/// Camera-`camera` moments of `feats` (all rows from that camera) and the
/// running-stat update of that camera's slot only.
inline ag::ChannelMoments csbn_update(CameraNormState& state, const Tensor& feats, int camera) {
    if (camera < 0 || static_cast<std::size_t>(camera) >= state.cameras())
        throw ConfigError("csbn_update: camera " + std::to_string(camera) + " out of range");
    if (feats.ndim() < 2 || feats.dim(0) < 2)
        throw NumericError("csbn_update: camera " + std::to_string(camera) + " needs a batch of at least 2 samples");
    if (feats.dim(1) != state.channels()) throw ShapeError("csbn_update: channel mismatch");
    ag::ChannelMoments m = ag::channel_moments(feats);
    state.slots[static_cast<std::size_t>(camera)].update(m, state.momentum);
    return m;
}

/// Transforms features into the distribution of `target_camera`:
/// gamma * (f - mu_c') / sqrt(var_c' + eps) + beta, per channel.
///
/// The learned shift is applied as "+ beta"; writing it as "- beta" only
/// flips the sign of a free parameter. `batch` supplies the target camera's
/// moments in batch_stats mode. The result carries no gradient history: it
/// is a prediction target.
inline Tensor csbn_augment(const CameraNormState& state, const Tensor& feats, int target_camera, AugmentMode mode,
                           const ag::ChannelMoments* batch = nullptr) {
    if (target_camera < 0 || static_cast<std::size_t>(target_camera) >= state.cameras())
        throw ConfigError("csbn_augment: camera " + std::to_string(target_camera) + " out of range");
    const NormSlot& slot = state.slots[static_cast<std::size_t>(target_camera)];
    const Tensor* mean = &slot.running_mean;
    const Tensor* var = &slot.running_var;
    if (mode == AugmentMode::batch_stats) {
        if (!batch) throw StateError("csbn_augment: batch_stats mode needs batch moments");
        mean = &batch->mean;
        var = &batch->var;
    } else if (!slot.initialized) {
        throw StateError("csbn_augment: camera " + std::to_string(target_camera) + " has no statistics yet");
    }
    ++state.augment_calls;
    ag::NoGradGuard no_grad;
    return ag::channel_affine_norm(ag::constant(feats), *mean, *var, ag::constant(state.gamma.value()),
                                   ag::constant(state.beta.value()), state.eps)
        .value();
}

}  // namespace crosscam::model
