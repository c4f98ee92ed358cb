// Scratch calibration harness used while tuning the desk preset. Not part
// of the shipped CLI surface.

#include <cstdio>
#include <string>
#include <vector>

#include "ulab/attack/mia.hpp"
#include "ulab/attack/quantize.hpp"
#include "ulab/attack/relearn.hpp"
#include "ulab/data/bundle.hpp"
#include "ulab/data/synthetic.hpp"
#include "ulab/diag/lmc.hpp"
#include "ulab/diag/stats.hpp"
#include "ulab/train/trainer.hpp"
#include "ulab/unlearn/methods.hpp"

using namespace ulab;
using namespace ulab::data;
using namespace ulab::train;
using namespace ulab::unlearn;

int main(int argc, char** argv) {
  SyntheticConfig cfg;
  cfg.classes = 10;
  cfg.per_class = 500;
  cfg.atypical_fraction = 0.10;
  cfg.input_dim = 32;
  cfg.island_size = 10;
  cfg.island_sigma = 0.25;
  cfg.island_offset = 2.0;
  cfg.mean_radius = 6.0;
  cfg.seed = 0;

  TrainConfig pre_tc;
  pre_tc.lr = 3e-3;
  pre_tc.weight_decay = 1e-4;
  pre_tc.epochs = 100;
  pre_tc.batch_size = 64;

  double unlearn_lr = 1e-3;
  int unlearn_epochs = 30;
  double relearn_lr = 1e-3;
  int relearn_epochs = 10;
  double wd_sigma = 0.8, wdr_lambda = 5.0, cf_coeff = 0.01, l1_coeff = 0.001;
  std::string only;

  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    auto val = [&] { return std::stod(argv[++i]); };
    if (a == "--seed") { cfg.seed = static_cast<std::uint64_t>(val()); pre_tc.seed = cfg.seed; }
    else if (a == "--plr") pre_tc.lr = val();
    else if (a == "--pep") pre_tc.epochs = static_cast<int>(val());
    else if (a == "--radius") cfg.mean_radius = val();
    else if (a == "--modes") cfg.modes_per_class = static_cast<int>(val());
    else if (a == "--dim") cfg.input_dim = static_cast<int>(val());
    else if (a == "--pwd") pre_tc.weight_decay = val();
    else if (a == "--isigma") cfg.island_sigma = val();
    else if (a == "--ioffset") cfg.island_offset = val();
    else if (a == "--ulr") unlearn_lr = val();
    else if (a == "--uep") unlearn_epochs = static_cast<int>(val());
    else if (a == "--rlr") relearn_lr = val();
    else if (a == "--sigma") wd_sigma = val();
    else if (a == "--wdr") wdr_lambda = val();
    else if (a == "--cf") cf_coeff = val();
    else if (a == "--l1") l1_coeff = val();
    else if (a == "--only") only = argv[++i];
  }

  auto [train_set, truth] = make_synthetic(cfg);
  auto [test_set, test_truth] = make_synthetic_test(cfg, 200);

  ForgetSpec fs;
  fs.scope = ForgetScope::sub_class;
  fs.class_id = 0;
  fs.typicality = ForgetTypicality::atypical;
  fs.fraction = 0.10;
  fs.seed = cfg.seed;
  auto bundle = build_bundle(train_set, truth, test_set, test_truth, fs, 0, cfg.seed);
  auto forget_ho = bundle.forget_holdout();
  auto retain_ds = bundle.retain();

  nn::Network<float> net(nn::mlp_tiny(cfg.input_dim, cfg.classes, 64));
  auto init = net.init(derive_seed(cfg.seed, "model-init"));
  auto pre = fit(net, init, train_set, pre_tc, {});
  std::printf("pretrain: train=%.3f test=%.3f forget_ho=%.3f\n", accuracy(net, pre, train_set),
              accuracy(net, pre, test_set), accuracy(net, pre, forget_ho));
  auto rs = retrain_from_scratch(net, init, bundle, pre_tc, {});
  std::printf("retrain:  test=%.3f forget_ho=%.3f dist=%.2f\n", accuracy(net, rs, test_set),
              accuracy(net, rs, forget_ho), nn::l2_param_distance(rs, pre));

  attack::RelearnConfig rl;
  rl.n_relearn = 0;
  rl.lr = relearn_lr;
  rl.epochs = relearn_epochs;
  rl.batch = 64;
  rl.seed = derive_seed(cfg.seed, "relearn");

  auto rs_rel = attack::relearn(net, rs, bundle, rl, {});
  const double rs_rel_forget = accuracy(net, rs_rel.ckpt, forget_ho);
  std::printf("retrain+rel0: test=%.3f forget_ho=%.3f\n", accuracy(net, rs_rel.ckpt, test_set),
              rs_rel_forget);

  auto make_cfg = [&](const std::string& method) {
    UnlearnConfig uc;
    uc.method = method;
    uc.lr = unlearn_lr;
    uc.epochs = unlearn_epochs;
    uc.batch = 64;
    uc.seed = derive_seed(cfg.seed, "unlearn", std::hash<std::string>{}(method));
    if (method == "catastrophic_forgetting") uc.params["coeff"] = cf_coeff;
    if (method == "l1_sparse") uc.params["coeff"] = l1_coeff;
    if (method == "weight_distortion") uc.params["magnitude"] = wd_sigma;
    if (method == "weight_dist_reg") uc.params["lambda"] = wdr_lambda;
    if (method == "neggrad_plus") uc.params["ascent_cap"] = 50.0;
    if (method == "circuit_breakers") uc.lr = 1e-2;
    if (method == "cbft") uc.params["lambda_mid"] = 1.0;
    if (method == "ssd") { uc.params["alpha"] = 10.0; uc.params["lambda"] = 3.0; }
    if (method == "tar") { uc.lr = 1e-3; uc.params["lambda_entropy"] = 0.1; uc.params["lambda_align"] = 1.0; uc.params["inner_lr"] = 1e-4; }
    return uc;
  };

  std::vector<std::string> methods = {"scrub",
                                      "circuit_breakers",
                                      "neggrad_plus",
                                      "catastrophic_forgetting",
                                      "l1_sparse",
                                      "ssd",
                                      "random_relabel",
                                      "weight_attenuation",
                                      "weight_dropout",
                                      "weight_distortion",
                                      "weight_dist_reg",
                                      "cbft",
                                      "tar"};
  if (!only.empty()) methods = {only};

  std::vector<double> dists, recoveries;
  std::printf("%-26s %7s %7s %7s | %7s %7s | %7s %7s\n", "method", "u_test", "u_fho", "dist",
              "r_test", "r_fho", "recov", "excess");
  for (const auto& m : methods) {
    UnlearnResult res;
    if (m == "tar") {
      auto sg = run_unlearn(net, pre, bundle, make_cfg("scrub"), {});
      res = run_unlearn(net, pre, bundle, make_cfg("tar"), {}, &sg.ckpt);
    } else {
      res = run_unlearn(net, pre, bundle, make_cfg(m), {});
    }
    const double u_test = accuracy(net, res.ckpt, test_set);
    const double u_fho = accuracy(net, res.ckpt, forget_ho);
    auto rel = attack::relearn(net, res.ckpt, bundle, rl, {});
    const double r_test = accuracy(net, rel.ckpt, test_set);
    const double r_fho = accuracy(net, rel.ckpt, forget_ho);
    std::printf("%-26s %7.3f %7.3f %7.2f | %7.3f %7.3f | %+7.3f %+7.3f | rdist=%5.2f\n", m.c_str(),
                u_test, u_fho, res.l2_from_pretrained, r_test, r_fho, r_fho - u_fho,
                r_fho - rs_rel_forget, nn::l2_param_distance(rel.ckpt, pre));
    dists.push_back(res.l2_from_pretrained);
    recoveries.push_back(r_fho - u_fho);
  }
  if (dists.size() >= 3)
    std::printf("spearman(dist, recovery) = %.3f\n", diag::spearman(dists, recoveries));

  // LMC barriers for reference
  auto curve_rs = diag::lmc_curve(net, pre, rs, 11, test_set, forget_ho, retain_ds);
  std::printf("barrier(pre, retrain) = %.3f\n", diag::barrier_height(curve_rs));
  return 0;
}
