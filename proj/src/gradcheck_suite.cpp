#include "diablo/gradcheck_suite.hpp"

#include <random>

#include "diablo/backbone.hpp"
#include "diablo/ops.hpp"

namespace diablo {

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double low = -1.0, double high = 1.0) {
  std::uniform_real_distribution<double> dist(low, high);
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v));
}

Tensor random_normal(Shape shape, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v));
}

// Reduces any output to a scalar through fixed random weights, so every
// output element contributes a distinct amount to the gradient.
ScalarFunction projected(std::function<Tensor(const std::vector<Tensor>&)> op, Tensor weights) {
  return [op = std::move(op), weights](const std::vector<Tensor>& in) {
    const Tensor out = op(in);
    return dot(out, weights);
  };
}

GradcheckCase unary_case(std::string name, Shape shape, double low, double high,
                         std::function<Tensor(const Tensor&)> op, Shape out_shape = {}) {
  if (out_shape.empty()) out_shape = shape;
  return {name, [shape, out_shape, low, high, op](std::uint64_t seed) {
            std::mt19937_64 rng(seed);
            Tensor x = random_tensor(shape, rng, low, high);
            Tensor w = random_tensor(out_shape, rng);
            return GradcheckProblem{projected([op](const auto& in) { return op(in[0]); }, w), {x}};
          }};
}

GradcheckCase binary_case(std::string name, Shape a_shape, Shape b_shape, Shape out_shape,
                          std::function<Tensor(const Tensor&, const Tensor&)> op) {
  return {name, [a_shape, b_shape, out_shape, op](std::uint64_t seed) {
            std::mt19937_64 rng(seed);
            Tensor a = random_tensor(a_shape, rng);
            Tensor b = random_tensor(b_shape, rng);
            Tensor w = random_tensor(out_shape, rng);
            return GradcheckProblem{projected([op](const auto& in) { return op(in[0], in[1]); }, w),
                                    {a, b}};
          }};
}

std::vector<Tensor> model_inputs(const DiabloModel& model) { return model.parameters(); }

// Freshly initialised biases are all zero, which puts ReLU inputs exactly on
// the kink wherever a whole input row is zero. Checks use random biases.
void randomize_biases(LayerStack& stack, std::mt19937_64& rng) {
  for (Tensor& b : stack.biases) b = random_tensor(b.shape(), rng, -0.2, 0.2);
}

// Rebuilds a model view whose parameters are the given tensors, in
// DiabloModel::parameters() order.
DiabloModel rebind(const DiabloModel& model, const std::vector<Tensor>& p, std::size_t offset) {
  DiabloModel m = model;
  std::size_t i = offset;
  for (std::size_t k = 0; k < m.phi.weights.size(); ++k) {
    m.phi.weights[k] = p[i++];
    m.phi.biases[k] = p[i++];
  }
  for (std::size_t k = 0; k < m.psi.weights.size(); ++k) {
    m.psi.weights[k] = p[i++];
    m.psi.biases[k] = p[i++];
  }
  m.dictionary.entries = p[i++];
  for (BranchHead& h : m.heads) {
    h.weight = p[i++];
    h.bias = p[i++];
  }
  return m;
}

std::string pipeline_name(Strategy s, SelectionMode m) {
  return std::string(m == SelectionMode::feature_wise ? "feature" : "dimension") + "/" +
         (s == Strategy::pre_attention ? "pre" : "post");
}

const char* loss_name(LossKind k) {
  switch (k) {
    case LossKind::contrastive: return "contrastive";
    case LossKind::triplet: return "triplet";
    case LossKind::binomial: return "binomial";
  }
  return "?";
}

}  // namespace

std::vector<GradcheckCase> op_gradcheck_cases() {
  std::vector<GradcheckCase> cases;
  cases.push_back(binary_case("add", {3, 4}, {3, 4}, {3, 4}, [](auto& a, auto& b) { return add(a, b); }));
  cases.push_back(binary_case("sub", {3, 4}, {3, 4}, {3, 4}, [](auto& a, auto& b) { return sub(a, b); }));
  cases.push_back(binary_case("mul", {3, 4}, {3, 4}, {3, 4}, [](auto& a, auto& b) { return mul(a, b); }));
  cases.push_back(binary_case("mul_scalar_operand", {3, 4}, {1}, {3, 4},
                              [](auto& a, auto& b) { return mul(a, b); }));
  cases.push_back(unary_case("relu", {12}, -1.0, 1.0, [](auto& x) { return relu(x); }));
  cases.push_back(unary_case("exp", {12}, -1.0, 1.0, [](auto& x) { return exp(x); }));
  cases.push_back(unary_case("log", {12}, 0.5, 2.0, [](auto& x) { return log(x); }));
  cases.push_back(unary_case("sqrt", {12}, 0.5, 2.0, [](auto& x) { return sqrt(x); }));
  cases.push_back(unary_case("softplus", {12}, -3.0, 3.0, [](auto& x) { return softplus(x); }));
  cases.push_back(unary_case("scale", {12}, -1.0, 1.0, [](auto& x) { return scale(x, -1.7); }));
  cases.push_back(unary_case("sum", {3, 4}, -1.0, 1.0, [](auto& x) { return mul(sum(x), sum(x)); }, {1}));
  cases.push_back(unary_case("mean", {3, 4}, -1.0, 1.0, [](auto& x) { return mul(mean(x), mean(x)); }, {1}));
  cases.push_back(binary_case("dot", {6}, {6}, {1}, [](auto& a, auto& b) { return dot(a, b); }));
  cases.push_back(unary_case("reshape", {2, 6}, -1.0, 1.0, [](auto& x) { return reshape(x, {3, 4}); }, {3, 4}));
  cases.push_back(unary_case("permute", {2, 3, 4}, -1.0, 1.0, [](auto& x) { return permute(x, {2, 0, 1}); }, {4, 2, 3}));
  cases.push_back(unary_case("transpose", {3, 4}, -1.0, 1.0, [](auto& x) { return transpose(x); }, {4, 3}));
  cases.push_back(unary_case("slice", {10}, -1.0, 1.0, [](auto& x) { return slice(x, 3, 5); }, {5}));
  cases.push_back(unary_case("select", {3, 4}, -1.0, 1.0, [](auto& x) { return select(x, 1); }, {4}));
  cases.push_back(binary_case("stack", {4}, {4}, {2, 4}, [](auto& a, auto& b) {
    const Tensor parts[] = {a, b};
    return stack(parts);
  }));
  cases.push_back(unary_case("broadcast_axis", {2, 1, 3}, -1.0, 1.0,
                             [](auto& x) { return broadcast_axis(x, 1, 4); }, {2, 4, 3}));
  cases.push_back(binary_case("concat", {3}, {5}, {8}, [](auto& a, auto& b) {
    const Tensor parts[] = {a, b};
    return concat(parts);
  }));
  cases.push_back(binary_case("matmul", {3, 4}, {4, 2}, {3, 2}, [](auto& a, auto& b) { return matmul(a, b); }));
  cases.push_back({"affine", [](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     Tensor x = random_tensor({3, 4}, rng), w = random_tensor({4, 2}, rng),
                            b = random_tensor({2}, rng), proj = random_tensor({3, 2}, rng);
                     return GradcheckProblem{
                         projected([](const auto& in) { return affine(in[0], in[1], in[2]); }, proj),
                         {x, w, b}};
                   }});
  cases.push_back(unary_case("softmax_over_axis", {3, 4, 5}, -1.0, 1.0,
                             [](auto& x) { return softmax_over_axis(x, 1, 2.5); }));
  cases.push_back(unary_case("l2_normalize", {3, 5}, -1.0, 1.0,
                             [](auto& x) { return l2_normalize(x, 1); }));
  cases.push_back(unary_case("spatial_mean_pool", {3, 2, 4}, -1.0, 1.0,
                             [](auto& x) { return spatial_mean_pool(x); }, {4}));
  cases.push_back(binary_case("cosine_similarity", {7}, {7}, {1},
                              [](auto& a, auto& b) { return cosine_similarity(a, b); }));
  cases.push_back({"forward_stack", [](std::uint64_t seed) {
                     LayerStack stack = init_stack({8, {8, 8}, {}, seed});
                     std::mt19937_64 rng(seed + 1);
                     randomize_biases(stack, rng);
                     Tensor x = random_normal({4, 4, 8}, rng), proj = random_tensor({4, 4, 8}, rng);
                     std::vector<Tensor> inputs{x};
                     for (const Tensor& t : stack.parameters()) inputs.push_back(t);
                     const auto f = [stack](const std::vector<Tensor>& in) {
                       LayerStack s = stack;
                       for (std::size_t k = 0; k < s.weights.size(); ++k) {
                         s.weights[k] = in[1 + 2 * k];
                         s.biases[k] = in[2 + 2 * k];
                       }
                       return forward_stack(s, in[0]);
                     };
                     return GradcheckProblem{projected(f, proj), inputs};
                   }});
  for (SelectionMode mode : {SelectionMode::feature_wise, SelectionMode::dimension_wise}) {
    const std::string name = mode == SelectionMode::feature_wise ? "select_feature_wise"
                                                                 : "select_dimension_wise";
    cases.push_back({name, [mode](std::uint64_t seed) {
                       const Dictionary d = init_dictionary(mode, 3, 6, 5, 5.0, seed);
                       std::mt19937_64 rng(seed + 1);
                       Tensor phi = random_normal({2, 3, 6}, rng), proj = random_tensor({3, 2, 3, 5}, rng);
                       const auto f = [d](const std::vector<Tensor>& in) {
                         Dictionary local = d;
                         local.entries = in[1];
                         return select_attention(in[0], local, 5).weights;
                       };
                       return GradcheckProblem{projected(f, proj), {phi, d.entries}};
                     }});
  }
  cases.push_back({"merge", [](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     Tensor f = random_tensor({2, 3, 4}, rng), a = random_tensor({3, 2, 3, 4}, rng, 0.0, 1.0);
                     Tensor proj = random_tensor({24}, rng);
                     const auto fn = [](const std::vector<Tensor>& in) {
                       std::vector<Tensor> flat;
                       for (const Tensor& h : merge(in[0], AttentionTensor{in[1]})) flat.push_back(reshape(h, {h.size()}));
                       return concat(flat);
                     };
                     // three branches of 24 values; project each with the same weights
                     Tensor w(Shape{72});
                     for (std::size_t i = 0; i < 72; ++i) w.mutable_values()[i] = proj.values()[i % 24] * (1.0 + static_cast<double>(i / 24));
                     return GradcheckProblem{projected(fn, w), {f, a}};
                   }});
  cases.push_back({"branch_head", [](std::uint64_t seed) {
                     std::mt19937_64 rng(seed);
                     Tensor h = random_tensor({3, 3, 4}, rng), w = random_tensor({4, 5}, rng),
                            b = random_tensor({5}, rng), proj = random_tensor({5}, rng);
                     const auto fn = [](const std::vector<Tensor>& in) {
                       return branch_head(in[0], BranchHead{in[1], in[2]});
                     };
                     return GradcheckProblem{projected(fn, proj), {h, w, b}};
                   }});
  return cases;
}

DiabloModel gradcheck_model(Strategy strategy, SelectionMode mode, std::uint64_t seed) {
  DiabloConfig cfg;
  cfg.strategy = strategy;
  cfg.mode = mode;
  cfg.branches = 2;
  cfg.embedding_size = 8;
  cfg.hardness = 5.0;
  cfg.phi_widths = {8, 8};
  cfg.psi_widths = {8, 8};
  DiabloModel model = init_model(cfg, 8, seed);
  std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
  randomize_biases(model.phi, rng);
  randomize_biases(model.psi, rng);
  return model;
}

std::vector<GradcheckCase> pipeline_gradcheck_cases() {
  std::vector<GradcheckCase> cases;
  for (Strategy s : {Strategy::post_attention, Strategy::pre_attention}) {
    for (SelectionMode m : {SelectionMode::feature_wise, SelectionMode::dimension_wise}) {
      cases.push_back({"pipeline " + pipeline_name(s, m), [s, m](std::uint64_t seed) {
                         const DiabloModel model = gradcheck_model(s, m, seed);
                         std::mt19937_64 rng(seed + 17);
                         std::vector<Tensor> inputs{random_normal({4, 4, 8}, rng)};
                         for (const Tensor& t : model_inputs(model)) inputs.push_back(t);
                         const Tensor proj = random_tensor({model.config.embedding_size}, rng);
                         const auto f = [model](const std::vector<Tensor>& in) {
                           return diablo_forward(in[0], rebind(model, in, 1));
                         };
                         return GradcheckProblem{projected(f, proj), inputs};
                       }});
      for (LossKind loss : {LossKind::contrastive, LossKind::triplet, LossKind::binomial}) {
        cases.push_back({"pipeline " + pipeline_name(s, m) + " + " + loss_name(loss),
                         [s, m, loss](std::uint64_t seed) {
                           const DiabloModel model = gradcheck_model(s, m, seed);
                           std::mt19937_64 rng(seed + 29);
                           constexpr std::size_t kSamples = 4;
                           std::vector<Tensor> inputs;
                           for (std::size_t i = 0; i < kSamples; ++i) inputs.push_back(random_normal({4, 4, 8}, rng));
                           for (const Tensor& t : model_inputs(model)) inputs.push_back(t);
                           LossConfig cfg;
                           cfg.kind = loss;
                           // keeps some triplets active on a four-sample batch
                           cfg.triplet_margin = 1.0;
                           const auto f = [model, cfg](const std::vector<Tensor>& in) {
                             const DiabloModel bound = rebind(model, in, kSamples);
                             Batch batch;
                             batch.labels = {0, 0, 1, 1};
                             batch.branches = bound.config.branches;
                             enumerate_tuples(batch);
                             for (std::size_t i = 0; i < kSamples; ++i) {
                               batch.embeddings.push_back(diablo_forward(in[i], bound));
                             }
                             return compute_loss(batch, cfg);
                           };
                           return GradcheckProblem{f, inputs};
                         }});
      }
    }
  }
  return cases;
}

GradcheckCase corrupted_gradient_case() {
  return {"corrupted_scale", [](std::uint64_t seed) {
            std::mt19937_64 rng(seed);
            Tensor x = random_tensor({6}, rng);
            const auto bad_double = [](const Tensor& in) {
              std::vector<double> out(in.values().begin(), in.values().end());
              for (double& v : out) v *= 2.0;
              const bool rec = should_record({&in});
              Tensor result(in.shape(), std::move(out), rec);
              if (rec) {
                active_tape()->record("corrupted_scale", {in}, result,
                                      [in](std::span<const double> g) {
                                        Tensor target = in;
                                        auto gx = target.mutable_grad();
                                        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += 4.0 * g[i];
                                      });
              }
              return result;
            };
            const auto f = [bad_double](const std::vector<Tensor>& in) {
              const Tensor y = bad_double(in[0]);
              return dot(y, y);
            };
            return GradcheckProblem{f, {x}};
          }};
}

std::vector<SuiteEntry> run_gradcheck_suite(const SuiteOptions& options) {
  std::vector<SuiteEntry> out;
  const auto run = [&](const GradcheckCase& c, std::size_t seeds, const GradcheckOptions& check) {
    for (std::uint64_t seed = 0; seed < seeds; ++seed) {
      GradcheckProblem p = c.build(seed);
      out.push_back({c.name, seed, gradcheck(p.function, p.inputs, check)});
    }
  };
  for (const GradcheckCase& c : op_gradcheck_cases()) run(c, options.op_seeds, options.check);
  for (const GradcheckCase& c : pipeline_gradcheck_cases()) {
    run(c, options.pipeline_seeds, options.pipeline_check);
  }
  if (options.include_corrupted) run(corrupted_gradient_case(), 1, options.check);
  return out;
}

}  // namespace diablo
