#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "llab/graph.hpp"
#include "llab/param.hpp"
#include "llab/rng.hpp"
#include "llab/tensor.hpp"

namespace llab {

// Seeded synthetic dataset. Inputs are normalized to [0,1]; regeneration
// from (task, sizes, seed) is bit-exact. Train and test are drawn from
// disjoint labeled RNG streams.
struct Dataset {
    std::string task;  // "autoencode" | "regress"
    std::uint64_t seed = 0;
    Tensor train_inputs, train_targets;
    Tensor test_inputs, test_targets;
};

// Registered surrogate benchmark specs:
//   econ-s   : 8x8 autoencoder; encoder conv(1->4,3x3,valid) + relu +
//              dense(144->16), decoder dense(16->64). Bit flips target the
//              encoder only.
//   fusion-s : 16x16 CNN regressor; conv(1->4,7x7,pad 3) + relu +
//              conv(4->8,7x7,pad 3) + relu + dense(2048->1).
ModelSpec zoo_spec(const std::string& name);
bool zoo_has(const std::string& name);
std::vector<std::string> zoo_names();

// Plain MLP spec for tests and toys: dense layers of the given widths with
// ReLU between hidden layers (optionally sigmoid).
ModelSpec mlp_spec(const std::vector<std::int64_t>& widths, bool sigmoid_hidden = false,
                   const std::string& name = "mlp");

// He-style uniform fan-in initialization for weights (limit sqrt(6/fan_in)),
// zero biases, drawn from the labeled stream (seed, "init").
ParamVector init_params(const ModelGraph& model, std::uint64_t seed);

// 8x8 single-channel images of randomized sparse charge deposits.
// Per image: n_dep in {1..4} deposits, each with center (cx,cy) uniform in
// [0,8)^2, amplitude a uniform in [0.5,1], spread r uniform in [0.6,1.5];
// pixel(x,y) = sum_dep a * exp(-((x+.5-cx)^2+(y+.5-cy)^2)/(2 r^2)),
// then the image is divided by its pixel sum. Targets equal inputs.
Tensor charge_deposit_image(Rng& rng);

// 16x16 sinusoidal mode pattern with scalar amplitude target:
// img(x,y) = 0.5 + 0.5 * a * sin(2*pi*(kx*(x+.5) + ky*(y+.5))/16 + phase).
Tensor mode_pattern_image(float amplitude, int kx, int ky, float phase);

// task "autoencode": targets = inputs (econ-s); task "regress": target is
// the amplitude in [0,1] (fusion-s).
Dataset generate_dataset(const std::string& task, std::int64_t train_size, std::int64_t test_size,
                         std::uint64_t seed);

}  // namespace llab
