// Copyright 2026 The tasq Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only when
// every criterion passes within its time budget.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include <unistd.h>

#include <Eigen/Dense>

#include "tasq/artifacts.hpp"
#include "tasq/errors.hpp"
#include "tasq/run_config.hpp"
#include "tasq/tensor_file.hpp"
#include "test_support.hpp"

namespace {

using namespace tasq;
namespace fs = std::filesystem;
using testing::random_tensor;

struct Outcome {
  bool ok = true;
  std::string detail;
};

// Tracks the first failure and a short summary.
class Check {
 public:
  void expect(bool cond, const std::string& what) {
    if (!cond && ok_) {
      ok_ = false;
      first_ = what;
    }
  }
  Outcome done(const std::string& summary) const { return {ok_, ok_ ? summary : "first failure: " + first_}; }

 private:
  bool ok_ = true;
  std::string first_;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Outcome quantization_kernel() {
  Check check;
  std::mt19937_64 rng(101);
  double worst = 0.0;
  for (int bits : {2, 4, 8}) {
    std::uniform_real_distribution<double> u(-3.0, 5.0);
    std::vector<double> xs(10000);
    for (double& x : xs) x = u(rng);
    const QuantParams p = compute_params(xs, bits);
    const double lo = p.scale * (0 - p.zero_point), hi = p.scale * (p.max_code() - p.zero_point);
    for (double x : xs) {
      if (x < lo || x > hi) continue;
      const double err = std::fabs(x - fake_quant_value(x, p));
      worst = std::max(worst, err / p.scale);
      check.expect(err <= p.scale / 2 + 1e-12, "b=" + std::to_string(bits) + " error above s/2 at x=" + fmt("%.17g", x));
    }
  }
  const QuantParams p{0.4, 6, 4};
  std::int32_t prev = -1;
  for (int i = 0; i < 1024; ++i) {
    const double x = -20.0 + 40.0 * i / 1023.0;
    const std::int32_t c = quantize_value(x, p);
    check.expect(c >= 0 && c <= 15, "code outside [0, 15]");
    check.expect(c >= prev, "non-monotone codes");
    if (x < p.scale * (-p.zero_point) - p.scale) check.expect(c == 0, "no saturation at the low end");
    if (x > p.scale * (15 - p.zero_point) + p.scale) check.expect(c == 15, "no saturation at the high end");
    prev = c;
  }
  return check.done("max |x-x^|/s " + fmt("%.6f", worst));
}

Outcome smoothing_exactness() {
  Check check;
  std::mt19937_64 rng(102);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor x = random_tensor(rng, {16, 12}), w = random_tensor(rng, {8, 12});
    const SmoothingFactor s{testing::random_positive(rng, 12, 1e-3, 1e3), std::nullopt};
    const SmoothedPair sp = apply_smoothing(x, w, s);
    const double rel = testing::rel_frobenius_diff(matmul_nt(sp.x, sp.w), matmul_nt(x, w));
    worst = std::max(worst, rel);
    check.expect(rel <= 1e-9, "relative error " + fmt("%.3g", rel));
  }
  return check.done("max rel err " + fmt("%.3g", worst));
}

Outcome eckart_young() {
  Check check;
  std::mt19937_64 rng(103);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor a = random_tensor(rng, {8, 8});
    const Eigen::MatrixXd ae = testing::to_eigen(a);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(ae.transpose() * ae);
    const Eigen::VectorXd lambda = eig.eigenvalues();  // ascending
    for (int r : {1, 2, 4}) {
      const double got = frobenius_norm(subtract(a, truncated_svd(a, r).reconstruct()));
      double tail = 0.0;
      for (int i = 0; i < 8 - r; ++i) tail += std::max(lambda(i), 0.0);
      const double oracle = std::sqrt(tail);
      const double rel = std::fabs(got - oracle) / oracle;
      worst = std::max(worst, rel);
      check.expect(rel <= 1e-8, "residual differs from the eigen oracle by " + fmt("%.3g", rel));
      // Candidates: best approximation inside a random r-dimensional column
      // space, Q·Qᵀ·A.
      for (int k = 0; k < 1000; ++k) {
        const Eigen::MatrixXd g = testing::to_eigen(random_tensor(rng, {8, static_cast<std::size_t>(r)}));
        const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ() *
                                  Eigen::MatrixXd::Identity(8, r);
        const double cand = (ae - q * (q.transpose() * ae)).norm();
        check.expect(got <= cand + 1e-12, "a random rank-r candidate beat the truncated SVD");
      }
    }
  }
  return check.done("max rel diff to oracle " + fmt("%.3g", worst) + ", 150000 candidates beaten");
}

Outcome grid_fidelity() {
  Check check;
  const GridSearchConfig cfg;
  const std::vector<double> alphas = cfg.alphas();
  check.expect(alphas.size() == 21, "grid does not have 21 points");
  for (int m = 0; m < 21 && m < static_cast<int>(alphas.size()); ++m) {
    check.expect(alphas[m] == 0.05 * m, "grid point " + std::to_string(m) + " is not 0.05*m");
  }
  std::mt19937_64 rng(104);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t c = 12, n = 8;
    Tensor x = random_tensor(rng, {2, 5, 6, c});
    const std::size_t outlier = trial % c;
    for (std::size_t i = outlier; i < x.size(); i += c) x[i] *= (trial % 2 ? 100.0 : 10.0);
    const Tensor w = scaled(random_tensor(rng, {n, c}), 0.3);
    const Tensor bias_t = random_tensor(rng, {n}, 0.1);
    const std::vector<double> bias(bias_t.values().begin(), bias_t.values().end());
    const ActivationTrace trace(x, "layer" + std::to_string(trial));
    const GridSearchResult r = grid_search_layer(trace, w, bias, cfg);

    // Independent statistics and factors.
    std::vector<double> a(c, 0.0), b(c, 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) a[i % c] = std::max(a[i % c], std::fabs(x[i]));
    for (std::size_t i = 0; i < w.size(); ++i) b[i % c] = std::max(b[i % c], std::fabs(w[i]));
    double best = 0.0;
    double best_alpha = 0.0;
    for (int m = 0; m <= 20; ++m) {
      const double alpha = 0.05 * m;
      SmoothingFactor s{std::vector<double>(c), alpha};
      for (std::size_t ch = 0; ch < c; ++ch) {
        s.s[ch] = std::pow(std::max(a[ch], 1e-8), alpha) / std::pow(std::max(b[ch], 1e-8), 1.0 - alpha);
      }
      const double loss = layer_loss(trace, w, bias, s, cfg);
      if (m == 0 || loss < best) {
        best = loss;
        best_alpha = alpha;
      }
      check.expect(r.best_loss <= loss, "returned loss exceeds the loss at alpha " + fmt("%.2f", alpha));
    }
    check.expect(r.best_alpha == best_alpha, "returned alpha " + fmt("%.2f", r.best_alpha) + " is not the smallest argmin");
    check.expect(std::fabs(r.best_loss - best) <= 1e-12 * best, "returned loss differs from re-evaluation");
  }
  return check.done("20 layers re-evaluated at 21 points");
}

Outcome ao_non_worsening() {
  Check check;
  std::mt19937_64 rng(105);
  CompensationConfig cfg;
  cfg.rank = 4;
  cfg.iterations = 10;
  cfg.weight_bits = 4;
  double worst_gap = 0.0, mean_gain = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor w = random_tensor(rng, {16, 16});
    const CompensatedWeight cw = alternating_optimize(w, cfg);
    Tensor deq(w.shape());
    for (std::size_t col = 0; col < 16; ++col) {
      const std::vector<double> v = w.column(col);
      const QuantParams p = compute_params(v, 4);
      for (std::size_t r = 0; r < 16; ++r) {
        deq(r, col) = testing::ref_fake_quant(v[r], {p.scale, p.zero_point, 4});
      }
    }
    const Eigen::MatrixXd r1 = testing::to_eigen(subtract(w, deq));
    const double plain = r1.norm();
    const double oracle1 = (r1 - testing::eigen_rank_r(r1, 4)).norm();
    const double final_res = frobenius_norm(subtract(w, cw.reconstruct()));
    check.expect(final_res <= plain + 1e-12, "final residual above plain quantization residual");
    check.expect(std::fabs(cw.residual_history.at(0) - oracle1) <= 1e-9, "iteration-1 residual differs from oracle");
    worst_gap = std::max(worst_gap, std::fabs(cw.residual_history.at(0) - oracle1));
    mean_gain += 1.0 - final_res / plain;
  }
  return check.done("max iter-1 diff " + fmt("%.3g", worst_gap) + ", mean residual reduction " +
                    fmt("%.1f%%", 100.0 * mean_gain / 50));
}

struct ReferenceRuns {
  EvalReport w4, w8;
};

const ReferenceRuns& reference_runs() {
  static const ReferenceRuns runs = [] {
    const GeneratedData data = generate_traces(ToyModelSpec::reference());
    PipelineConfig cfg;
    cfg.workers = 0;
    ReferenceRuns r;
    r.w4 = run_pipeline(data, cfg).report;
    cfg.weight_bits = 8;
    r.w8 = run_pipeline(data, cfg).report;
    return r;
  }();
  return runs;
}

Outcome ablation_ordering() {
  const EvalReport& r = reference_runs().w4;
  Check check;
  std::string summary;
  const VariantEval* prev = nullptr;
  for (const VariantEval& v : r.variants) {
    summary += (summary.empty() ? "" : " > ") + v.variant + " " + fmt("%.4g", v.end_to_end_mse);
    if (prev) {
      const double gain = 1.0 - v.end_to_end_mse / prev->end_to_end_mse;
      check.expect(gain >= kAblationMinRelativeGain, v.variant + " gains only " + fmt("%.3f", gain));
    }
    prev = &v;
  }
  check.expect(r.ablation_ordering_holds(), "ordering verdict is fail");
  return check.done(summary);
}

Outcome bitwidth_monotonicity() {
  const ReferenceRuns& r = reference_runs();
  Check check;
  std::string summary;
  for (Variant v : kAllVariants) {
    const double m8 = r.w8.variant(v).end_to_end_mse, m4 = r.w4.variant(v).end_to_end_mse;
    check.expect(m8 <= m4, std::string(to_string(v)) + ": W8A8 " + fmt("%.4g", m8) + " > W4A8 " + fmt("%.4g", m4));
    summary += (summary.empty() ? "" : ", ") + std::string(to_string(v)) + " " + fmt("%.3g", m8);
  }
  return check.done("W8A8 " + summary + "; runs shared with criterion 6");
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome serialization() {
  Check check;
  std::mt19937_64 rng(106);
  for (int trial = 0; trial < 100; ++trial) {
    Shape shape{1 + rng() % 5, 1 + rng() % 7, 1 + rng() % 3};
    const Tensor t = random_tensor(rng, shape, 1e3);
    check.expect(decode_tensor(encode_tensor(t)).to_tensor() == t, "f64 round trip");
    const std::vector<std::uint8_t> f32 = encode_tensor(t, DType::kFloat32);
    check.expect(encode_tensor(decode_tensor(f32).to_tensor(), DType::kFloat32) == f32, "f32 round trip");
    std::vector<std::uint8_t> codes(t.size());
    for (auto& c : codes) c = static_cast<std::uint8_t>(rng());
    const std::vector<std::uint8_t> u8 = encode_codes(shape, codes);
    check.expect(decode_tensor(u8).codes == codes && encode_codes(decode_tensor(u8).shape, codes) == u8, "u8 round trip");
  }

  const fs::path dir = fs::temp_directory_path() / ("tasq_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string cli = TASQ_CLI_PATH;
  const std::string cfg = (dir / "small.cfg").string();
  std::ofstream(cfg) << "layers = 2\nchannels = 16\ntokens = 4\ntimesteps = 6\ncalib_batch = 3\nheldout_batch = 2\n"
                        "rank = 4\noutliers = 0:3:100,1:5:30\n";
  const auto run = [&](const std::string& args) {
    return std::system((cli + " " + args + " > " + (dir / "log.txt").string() + " 2>&1").c_str());
  };
  const std::string tr = (dir / "traces").string(), md = (dir / "model").string();
  check.expect(run("gen-traces --config " + cfg + " --out " + tr) == 0, "gen-traces failed");
  check.expect(run("quantize --config " + cfg + " --traces " + tr + " --out " + md) == 0, "quantize failed");
  check.expect(run("eval --model " + md + " --traces " + tr + " --report " + (dir / "r1.txt").string()) == 0,
               "first eval failed");
  check.expect(run("eval --model " + md + " --traces " + tr + " --report " + (dir / "r2.txt").string() +
                   " --workers 4") == 0,
               "second eval failed");
  const std::string r1 = slurp(dir / "r1.txt");
  check.expect(!r1.empty() && r1 == slurp(dir / "r2.txt"), "eval reports differ");

  std::vector<std::uint8_t> bytes = read_file_bytes(dir / "traces" / "layer0.trace.dtas");
  bytes[bytes.size() / 2] ^= 0x10;
  write_file_atomic(dir / "traces" / "layer0.trace.dtas", bytes);
  check.expect(run("quantize --config " + cfg + " --traces " + tr + " --out " + (dir / "m2").string()) != 0,
               "quantize accepted a tampered trace");
  check.expect(slurp(dir / "log.txt").find("fingerprint mismatch") != std::string::npos,
               "tamper error does not mention the fingerprint");
  fs::remove_all(dir);
  return check.done("300 tensors round-tripped, tamper detected, reports identical");
}

Outcome defaults() {
  Check check;
  const RunConfig cfg = parse_run_config("");
  check.expect(cfg.weight_bits == 4 && cfg.act_bits == 8, "bitwidth defaults");
  check.expect(cfg.grid_points == 21 && cfg.rank == 32 && cfg.ao_iters == 10 && cfg.calib_batch == 12,
               "grid/rank/iteration/batch defaults");
  check.expect(dump_run_config(cfg) == slurp(fs::path(TASQ_GOLDEN_DIR) / "default_config.txt"),
               "dump differs from the golden file");
  return check.done("4/8/21/32/10/12");
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "quantization kernel", 1.0, quantization_kernel},
      {2, "smoothing exactness", 1.0, smoothing_exactness},
      {3, "truncated SVD optimality", 10.0, eckart_young},
      {4, "alpha grid search fidelity", 30.0, grid_fidelity},
      {5, "low-rank compensation non-worsening", 30.0, ao_non_worsening},
      {6, "ablation ordering W4A8", 120.0, ablation_ordering},
      {7, "bitwidth monotonicity", 120.0, bitwidth_monotonicity},
      {8, "serialization", 5.0, serialization},
      {9, "configuration defaults", 1.0, defaults},
  };
  int failures = 0;
  for (const Criterion& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (out.ok && secs > c.budget_s) out = {false, "over time budget; " + out.detail};
    failures += !out.ok;
    std::printf("criterion %d: %s  %s (%s; %.2f s of %.0f s)\n", c.id, out.ok ? "PASS" : "FAIL", c.name,
                out.detail.c_str(), secs, c.budget_s);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
