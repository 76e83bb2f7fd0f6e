#include "dekan/selfcheck.hpp"

#include <functional>

#include "dekan/kan.hpp"
#include "dekan/losses.hpp"
#include "dekan/model.hpp"

namespace dekan {

namespace {

using Fn = std::function<Tensor<double>(const Tensor<double>&)>;

Tensor<double> uniform(Shape shape, std::uint64_t seed, double lo, double hi) {
    Tensor<double> t(std::move(shape));
    Rng rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    for (auto& v : t.storage()) v = u(rng);
    return t;
}

double project(const Tensor<double>& w, const Tensor<double>& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += w[i] * y[i];
    return s;
}

// sum(w * f(x)) against its analytic gradient w.r.t. x and the module state.
GradCheckReport check(Tensor<double> x, const Fn& forward, const Fn& backward, const StateList<double>& state,
                      const GradCheckOptions& opts) {
    const Tensor<double> w = uniform(forward(x).shape(), 99, -1.0, 1.0);
    Tensor<double> dx(x.shape());
    auto targets = trainable_targets(state);
    targets.push_back({"input", &x, &dx});
    return gradient_check([&] { return project(w, forward(x)); },
                          [&] {
                              zero_grads(state);
                              forward(x);
                              dx = backward(w);
                          },
                          targets, opts);
}

template <typename M>
StateList<double> state_of(M& m) {
    StateList<double> st;
    m.collect(st, "");
    return st;
}

Tensor<double> distinct_values(Shape shape, std::uint64_t seed) {
    Tensor<double> t(std::move(shape));
    std::vector<double> v(t.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.01 * static_cast<double>(i);
    std::shuffle(v.begin(), v.end(), Rng(seed));
    t.storage() = v;
    return t;
}

Tensor<double> away_from_zero(Shape shape, std::uint64_t seed) {
    Tensor<double> t = uniform(std::move(shape), seed, 0.1, 1.0);
    for (std::size_t i = 0; i < t.size(); i += 2) t[i] = -t[i];
    return t;
}

GradCheckReport check_loss(int which, const GradCheckOptions& opts) {
    Tensor<double> logits = uniform({2, 1, 4, 5}, 201, -3.0, 3.0);
    Tensor<double> target({2, 1, 4, 5});
    Rng rng(202);
    for (auto& v : target.storage()) v = static_cast<double>(rng() & 1u);
    Tensor<double> grad(logits.shape());
    auto value = [&](Tensor<double>* g) {
        if (which == 0) return bce_loss(logits, target, g);
        if (which == 1) return dice_loss(logits, target, g);
        return combined_loss(logits, target, g).total;
    };
    return gradient_check([&] { return value(nullptr); },
                          [&] {
                              grad.zero();
                              value(&grad);
                          },
                          {{"logits", &logits, &grad}}, opts);
}

GradCheckReport check_model(const GradCheckOptions& opts) {
    ModelConfig cfg = ModelConfig::desk();
    cfg.image_h = cfg.image_w = 32;
    Dekan<double> model(cfg);
    Tensor<double> x_aug = uniform({2, 3, 32, 32}, 301, -1.0, 1.0);
    Tensor<double> x_orig = uniform({2, 3, 32, 32}, 302, -1.0, 1.0);
    Tensor<double> target({2, 1, 32, 32});
    Rng rng(303);
    for (auto& v : target.storage()) v = static_cast<double>(rng() & 1u);
    Tensor<double> d_aug, d_orig;
    const auto state = model.state();
    auto targets = trainable_targets(state);
    targets.push_back({"x_aug", &x_aug, &d_aug});
    targets.push_back({"x_orig", &x_orig, &d_orig});
    return gradient_check(
        [&] { return combined_loss(model.forward(x_aug, x_orig, true), target).total; },
        [&] {
            model.zero_grad();
            Tensor<double> dlogits;
            combined_loss(model.forward(x_aug, x_orig, true), target, &dlogits);
            std::tie(d_aug, d_orig) = model.backward(dlogits);
        },
        targets, opts);
}

}  // namespace

std::vector<SelfCheckEntry> run_gradient_suite(double tolerance, double model_tolerance) {
    GradCheckOptions opts;
    opts.tolerance = tolerance;
    std::vector<SelfCheckEntry> out;
    auto add = [&](std::string name, GradCheckReport r, double tol) { out.push_back({std::move(name), tol, r}); };
    Rng rng(1);

    for (const ConvSpec spec : {ConvSpec{3, 4, 3, 1, 1, true}, ConvSpec{2, 3, 7, 2, 3, false},
                                ConvSpec{3, 2, 1, 1, 0, true}}) {
        Conv2d<double> conv(spec);
        conv.init(rng);
        add("conv2d k" + std::to_string(spec.kernel) + " s" + std::to_string(spec.stride),
            check(uniform({2, spec.in_channels, 7, 6}, 11, -1, 1), [&](auto& x) { return conv.forward(x); },
                  [&](auto& dy) { return conv.backward(dy); }, state_of(conv), opts),
            tolerance);
    }
    for (bool training : {true, false}) {
        BatchNorm2d<double> bn({3});
        bn.scale().value = uniform({3}, 12, 0.5, 1.5);
        bn.shift().value = uniform({3}, 13, -1, 1);
        add(std::string("batchnorm2d ") + (training ? "train" : "eval"),
            check(uniform({2, 3, 3, 4}, 14, -2, 2), [&](auto& x) { return bn.forward(x, training); },
                  [&](auto& dy) { return bn.backward(dy); }, state_of(bn), opts),
            tolerance);
    }
    {
        LayerNorm<double> ln(5);
        ln.scale().value = uniform({5}, 15, 0.5, 1.5);
        ln.shift().value = uniform({5}, 16, -1, 1);
        add("layernorm",
            check(uniform({2, 4, 5}, 17, -2, 2), [&](auto& x) { return ln.forward(x); },
                  [&](auto& dy) { return ln.backward(dy); }, state_of(ln), opts),
            tolerance);
    }
    {
        ReLU<double> relu;
        add("relu",
            check(away_from_zero({2, 3, 4, 4}, 18), [&](auto& x) { return relu.forward(x); },
                  [&](auto& dy) { return relu.backward(dy); }, {}, opts),
            tolerance);
        SiLU<double> act;
        add("silu",
            check(uniform({2, 3, 4, 4}, 19, -3, 3), [&](auto& x) { return act.forward(x); },
                  [&](auto& dy) { return act.backward(dy); }, {}, opts),
            tolerance);
    }
    {
        Upsample2x<double> up;
        add("upsample2x",
            check(uniform({2, 2, 3, 4}, 20, -1, 1), [&](auto& x) { return up.forward(x); },
                  [&](auto& dy) { return up.backward(dy); }, {}, opts),
            tolerance);
        AdaptiveAvgPool2d<double> pool(2, 3);
        add("adaptive_avg_pool2d",
            check(uniform({2, 2, 5, 7}, 21, -1, 1), [&](auto& x) { return pool.forward(x); },
                  [&](auto& dy) { return pool.backward(dy); }, {}, opts),
            tolerance);
        MaxPool2d<double> maxpool(3, 2, 1);
        add("maxpool2d",
            check(distinct_values({2, 2, 6, 6}, 22), [&](auto& x) { return maxpool.forward(x); },
                  [&](auto& dy) { return maxpool.backward(dy); }, {}, opts),
            tolerance);
    }
    {
        const SplineGrid grid{-1, 1, 5, 3};
        const int nb = grid.basis_count();
        Tensor<double> x = uniform({40}, 23, -1.3, 1.3);
        const Tensor<double> w = uniform({40, nb}, 24, -1, 1);
        Tensor<double> dx({40});
        add("bspline_basis",
            gradient_check([&] { return project(w, bspline_basis<double>(x.values(), grid).values); },
                           [&] {
                               const auto b = bspline_basis<double>(x.values(), grid, true);
                               for (int i = 0; i < 40; ++i) {
                                   dx[i] = 0.0;
                                   for (int j = 0; j < nb; ++j) dx[i] += w[i * nb + j] * b.derivatives[i * nb + j];
                               }
                           },
                           {{"x", &x, &dx}}, opts),
            tolerance);
    }
    {
        KanLinear<double> layer(3, 4, {-1, 1, 5, 3});
        layer.init(rng);
        layer.spline_scale().value = uniform({4, 3}, 25, 0.5, 1.5);
        add("kan_linear",
            check(uniform({2, 3, 3}, 26, -1.3, 1.3), [&](auto& x) { return layer.forward(x); },
                  [&](auto& dy) { return layer.backward(dy); }, state_of(layer), opts),
            tolerance);
    }
    {
        KanBlock<double> block(3, {-1, 1, 4, 3});
        block.init(rng);
        GradCheckOptions fine = opts;
        fine.step = 1e-5;
        add("kan_block",
            check(uniform({2, 6, 3}, 27, -1, 1), [&](auto& x) { return block.forward(x, 2, 3, true); },
                  [&](auto& dy) { return block.backward(dy); }, state_of(block), fine),
            tolerance);
    }
    add("bce_loss", check_loss(0, opts), tolerance);
    add("dice_loss", check_loss(1, opts), tolerance);
    add("combined_loss", check_loss(2, opts), tolerance);

    GradCheckOptions model_opts;
    model_opts.tolerance = model_tolerance;
    model_opts.step = 1e-6;
    model_opts.max_entries_per_tensor = 3;
    model_opts.refinements = 3;
    add("dekan end-to-end (32x32 desk widths)", check_model(model_opts), model_tolerance);
    return out;
}

}  // namespace dekan
