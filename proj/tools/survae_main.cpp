// Command-line front end: dataset generation, training, evaluation, sampling,
// density grids, and the generated layer catalog.  Every command is
// deterministic under fixed flags; exit code 0 on success, 2 on usage errors,
// 1 on any other failure, always with a one-line diagnostic on stderr.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "survae/survae.hpp"

namespace {

using namespace survae;

// Thrown for semantically invalid flag combinations (bad values of
// well-formed flags); mapped to exit code 2 like CLI11's own parse errors.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training draws batches from this many freshly generated examples; evaluation
// uses an independent split of this size.
constexpr std::size_t kTrainSetSize = 128000;
constexpr std::size_t kEvalSetSize = 10000;

// Stream tags so each command's randomness is independent of the others.
constexpr std::uint64_t kTagInit = 0x696e6974;    // parameter initialization
constexpr std::uint64_t kTagEval = 0x6576616c;    // single-sample evaluation
constexpr std::uint64_t kTagSample = 0x73616d70;  // generative sampling

int cmd_generate(const std::string& dataset, std::size_t n, std::uint64_t seed,
                 const std::string& out) {
  if (n == 0) throw UsageError("--n must be positive");
  const Tensor t = data::generate(dataset, n, seed);
  data::write_csv(out, t, data::default_columns(t.cols()));
  std::cout << "wrote " << n << " " << dataset << " examples to " << out << "\n";
  return 0;
}

int cmd_train(const std::string& arch_arg, const std::string& dataset, std::size_t iters,
              double lr, std::size_t batch, std::uint64_t seed, const std::string& ckpt_out,
              const std::string& trace_out) {
  const nlohmann::json desc = arch::load_descriptor(arch_arg);
  Rng init_rng(mix_seed(seed, kTagInit));
  FlowPtr flow = arch::build_from_spec(desc, init_rng);
  std::cout << "architecture " << arch_arg << ": " << flow->parameter_count()
            << " parameters\n";

  const Tensor train_set = data::train_split(dataset, kTrainSetSize, seed);
  if (train_set.cols() != flow->data_dim())
    fail("dataset '", dataset, "' is ", train_set.cols(), "-dimensional but the architecture "
         "expects ", flow->data_dim());

  train::TrainConfig config;
  config.lr = lr;
  config.iterations = iters;
  config.batch_size = batch;
  config.seed = seed;
  train::TrainerState state;
  std::vector<train::TraceRow> trace;
  train::train(*flow, train_set, config, state, trace);

  train::write_trace_csv(trace_out, trace);
  ckpt::save(ckpt_out, *flow, desc, state, std::to_string(seed));
  if (!trace.empty())
    std::cout << "final objective " << trace.back().mean_nats << " nats\n";
  std::cout << "wrote checkpoint " << ckpt_out << " and trace " << trace_out << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& dataset, const std::string& metric,
             std::size_t k, std::uint64_t seed) {
  if (metric != "nll" && metric != "elbo" && metric != "iwbo")
    throw UsageError("--metric must be one of nll, elbo, iwbo");
  if (metric == "iwbo" && k < 1) throw UsageError("--metric iwbo requires --k >= 1");

  ckpt::Loaded loaded = ckpt::load(ckpt_path);
  const Flow& flow = *loaded.flow;
  const Tensor test_set = data::test_split(dataset, kEvalSetSize, seed);
  if (test_set.cols() != flow.data_dim())
    fail("dataset '", dataset, "' is ", test_set.cols(), "-dimensional but the checkpoint "
         "expects ", flow.data_dim());

  // All metrics are reported as negative log-likelihood in nats (lower is
  // better); elbo/iwbo therefore yield upper bounds on the true value.
  Tensor nats = Tensor::zeros({test_set.rows()});
  if (metric == "nll") {
    Rng rng(mix_seed(seed, kTagEval));
    const Tensor lp = flow.log_prob(test_set, rng);
    for (std::size_t i = 0; i < nats.numel(); ++i) nats.data[i] = -lp.data[i];
  } else {
    const auto bounds = flow.bounds(test_set, std::max<std::size_t>(k, 1), seed);
    const Tensor& b = metric == "elbo" ? bounds.elbo : bounds.iwbo;
    for (std::size_t i = 0; i < nats.numel(); ++i) nats.data[i] = -b.data[i];
  }

  double mean = 0.0;
  for (double v : nats.data) mean += v;
  mean /= static_cast<double>(nats.numel());
  const double bits_per_dim = mean / (static_cast<double>(flow.data_dim()) * std::log(2.0));

  std::ofstream out("eval.csv");
  if (!out) fail("cannot open 'eval.csv' for writing");
  out << "index,nats\n";
  char buf[64];
  for (std::size_t i = 0; i < nats.numel(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", nats.data[i]);
    out << i << ',' << buf << '\n';
  }

  std::snprintf(buf, sizeof(buf), "%.17g", mean);
  std::cout << metric << " " << buf << " nats";
  std::snprintf(buf, sizeof(buf), "%.17g", bits_per_dim);
  std::cout << " (" << buf << " bits/dim) over " << nats.numel() << " examples\n";
  std::cout << "wrote per-example values to eval.csv\n";
  return 0;
}

int cmd_sample(const std::string& ckpt_path, std::size_t n, std::uint64_t seed,
               const std::string& out) {
  if (n == 0) throw UsageError("--n must be positive");
  ckpt::Loaded loaded = ckpt::load(ckpt_path);
  Rng rng(mix_seed(seed, kTagSample));
  const Tensor samples = loaded.flow->sample(rng, n);
  data::write_csv(out, samples, data::default_columns(samples.cols()));
  std::cout << "wrote " << n << " samples to " << out << "\n";
  return 0;
}

int cmd_grid(const std::string& ckpt_path, double xmin, double xmax, double ymin, double ymax,
             std::size_t res, const std::string& out) {
  if (res == 0) throw UsageError("--res must be positive");
  if (!(xmax > xmin) || !(ymax > ymin))
    throw UsageError("grid bounds must satisfy xmin < xmax and ymin < ymax");
  const bool csv = out.ends_with(".csv");
  const bool ppm = out.ends_with(".ppm");
  if (!csv && !ppm) throw UsageError("--out must end in .csv or .ppm");

  ckpt::Loaded loaded = ckpt::load(ckpt_path);
  const Flow& flow = *loaded.flow;
  if (flow.data_dim() != 2) fail("density grids require a 2-dimensional model");

  // One point per cell center, evaluated bottom row (ymin) first.
  const double dx = (xmax - xmin) / static_cast<double>(res);
  const double dy = (ymax - ymin) / static_cast<double>(res);
  Tensor points = Tensor::zeros({res * res, 2});
  for (std::size_t iy = 0; iy < res; ++iy)
    for (std::size_t ix = 0; ix < res; ++ix) {
      points.data[(iy * res + ix) * 2 + 0] = xmin + (static_cast<double>(ix) + 0.5) * dx;
      points.data[(iy * res + ix) * 2 + 1] = ymin + (static_cast<double>(iy) + 0.5) * dy;
    }
  Rng rng(0);  // only consulted by stochastic layers
  const Tensor lp = flow.log_prob(points, rng);

  if (csv) {
    std::ofstream f(out);
    if (!f) fail("cannot open '", out, "' for writing");
    f << "x,y,density\n";
    char buf[64];
    for (std::size_t i = 0; i < res * res; ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", points.data[2 * i]);
      f << buf << ',';
      std::snprintf(buf, sizeof(buf), "%.17g", points.data[2 * i + 1]);
      f << buf << ',';
      std::snprintf(buf, sizeof(buf), "%.17g", std::exp(lp.data[i]));
      f << buf << '\n';
    }
  } else {
    double peak = 0.0;
    for (std::size_t i = 0; i < res * res; ++i) peak = std::max(peak, std::exp(lp.data[i]));
    std::ofstream f(out, std::ios::binary);
    if (!f) fail("cannot open '", out, "' for writing");
    f << "P5\n" << res << " " << res << "\n255\n";
    // Image rows run top to bottom, so the highest y band is emitted first.
    for (std::size_t row = 0; row < res; ++row) {
      const std::size_t iy = res - 1 - row;
      for (std::size_t ix = 0; ix < res; ++ix) {
        const double d = std::exp(lp.data[iy * res + ix]);
        const double v = peak > 0.0 ? 255.0 * d / peak : 0.0;
        f.put(static_cast<char>(std::lround(v)));
      }
    }
  }
  std::cout << "wrote " << res << "x" << res << " density grid to " << out << "\n";
  return 0;
}

int cmd_catalog(const std::string& out) {
  const std::string doc = catalog::render();
  std::ofstream f(out);
  if (!f) fail("cannot open '", out, "' for writing");
  f << doc;
  std::cout << "wrote layer catalog to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Density estimation with composable exact and surjective transforms"};
  app.require_subcommand(1);

  std::string dataset, arch_arg, out, ckpt_path, metric, trace_out, ckpt_out;
  std::size_t n = 0, iters = 10000, batch = 128, k = 0, res = 200;
  std::uint64_t seed = 0;
  double lr = 1e-3, xmin = -4.0, xmax = 4.0, ymin = -4.0, ymax = 4.0;

  auto* g = app.add_subcommand("generate", "Write a synthetic dataset as CSV");
  g->add_option("--dataset", dataset, "Dataset name")->required();
  g->add_option("--n", n, "Number of examples")->required();
  g->add_option("--seed", seed, "Random seed");
  g->add_option("--out", out, "Output CSV path")->required();

  auto* t = app.add_subcommand("train", "Train a model and write checkpoint + trace");
  t->add_option("--arch", arch_arg, "Preset name or descriptor JSON path")->required();
  t->add_option("--dataset", dataset, "Dataset name")->required();
  t->add_option("--iters", iters, "Training iterations (default 10000)");
  t->add_option("--lr", lr, "Peak learning rate (default 1e-3)");
  t->add_option("--batch", batch, "Batch size (default 128)");
  t->add_option("--seed", seed, "Random seed");
  t->add_option("--ckpt-out", ckpt_out, "Checkpoint output path")->default_val("model.ckpt");
  t->add_option("--trace-out", trace_out, "Trace CSV output path")->default_val("trace.csv");

  auto* e = app.add_subcommand("eval",
                               "Evaluate a checkpoint; prints mean nats and bits/dim and "
                               "writes per-example values to ./eval.csv");
  e->add_option("--ckpt", ckpt_path, "Checkpoint path")->required();
  e->add_option("--dataset", dataset, "Dataset name")->required();
  e->add_option("--metric", metric, "nll, elbo, or iwbo")->required();
  e->add_option("--k", k, "Importance samples (iwbo requires k >= 1)");
  e->add_option("--seed", seed, "Random seed");

  auto* s = app.add_subcommand("sample", "Draw samples from a checkpoint");
  s->add_option("--ckpt", ckpt_path, "Checkpoint path")->required();
  s->add_option("--n", n, "Number of samples")->required();
  s->add_option("--seed", seed, "Random seed");
  s->add_option("--out", out, "Output CSV path")->required();

  auto* d = app.add_subcommand("grid", "Evaluate the model density on a 2-D lattice");
  d->add_option("--ckpt", ckpt_path, "Checkpoint path")->required();
  d->add_option("--xmin", xmin, "Left edge (default -4)");
  d->add_option("--xmax", xmax, "Right edge (default 4)");
  d->add_option("--ymin", ymin, "Bottom edge (default -4)");
  d->add_option("--ymax", ymax, "Top edge (default 4)");
  d->add_option("--res", res, "Cells per side (default 200)");
  d->add_option("--out", out, "Output path, .csv or .ppm")->required();

  auto* c = app.add_subcommand("catalog", "Render the layer catalog markdown");
  c->add_option("--out", out, "Output markdown path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (g->parsed()) return cmd_generate(dataset, n, seed, out);
    if (t->parsed()) return cmd_train(arch_arg, dataset, iters, lr, batch, seed, ckpt_out,
                                      trace_out);
    if (e->parsed()) return cmd_eval(ckpt_path, dataset, metric, k, seed);
    if (s->parsed()) return cmd_sample(ckpt_path, n, seed, out);
    if (d->parsed()) return cmd_grid(ckpt_path, xmin, xmax, ymin, ymax, res, out);
    if (c->parsed()) return cmd_catalog(out);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
