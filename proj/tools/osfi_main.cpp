// Command-line driver: dataset synthesis, encoder pretraining, gallery
// fine-tuning, open-set evaluation, and the k / gallery-size sweeps.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "osfi/errors.hpp"
#include "osfi/harness.hpp"

namespace {

using osfi::SyntheticConfig;

void add_config_option(CLI::App* cmd) {
  cmd->set_config("--config", "", "Read key = value defaults from a file");
  cmd->allow_config_extras(CLI::config_extras_mode::error);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Open-set identification on a few-shot gallery"};
  app.require_subcommand(1);

  // synth
  SyntheticConfig synth_cfg;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Generate synthetic datasets");
  add_config_option(synth);
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--seed", synth_cfg.seed, "RNG seed");
  synth->add_option("--pretrain-ids", synth_cfg.num_pretrain_ids, "");
  synth->add_option("--pretrain-samples", synth_cfg.pretrain_samples_per_id, "");
  synth->add_option("--eval-ids", synth_cfg.num_eval_ids, "");
  synth->add_option("--eval-samples", synth_cfg.eval_samples_per_id, "");
  synth->add_option("--input-dim", synth_cfg.input_dim, "");
  synth->add_option("--sigma-within", synth_cfg.sigma_within, "");
  synth->add_option("--center-scale", synth_cfg.center_scale, "");
  synth->add_option("--probe-noise", synth_cfg.probe_noise, "");

  // pretrain
  osfi::PretrainOptions pre;
  auto* pretrain = app.add_subcommand("pretrain", "Train the encoder");
  add_config_option(pretrain);
  pretrain->add_option("--data", pre.data_path, "Raw pretrain dataset")->required();
  pretrain->add_option("--out", pre.out_dir, "Output directory")->required();
  pretrain->add_option("--seed", pre.train.seed, "");
  pretrain->add_option("--epochs", pre.train.epochs, "Epoch cap");
  pretrain->add_option("--batch", pre.train.batch_size, "");
  pretrain->add_option("--lr", pre.train.learning_rate, "");
  pretrain->add_option("--target-acc", pre.target_accuracy, "");
  pretrain->add_option("--scale", pre.loss.scale, "CosFace scale");
  pretrain->add_option("--margin", pre.loss.margin, "CosFace margin");
  pretrain->add_option("--hidden", pre.arch.hidden_width, "");
  pretrain->add_option("--blocks", pre.arch.num_blocks, "");
  pretrain->add_option("--embed-dim", pre.arch.embed_dim, "");

  // finetune
  osfi::FinetuneOptions ft;
  std::string ft_init = "wi", ft_mode = "bn";
  auto* finetune = app.add_subcommand("finetune", "Fine-tune on the gallery");
  add_config_option(finetune);
  finetune->add_option("--checkpoint", ft.checkpoint_path, "")->required();
  finetune->add_option("--data", ft.data_path, "Raw eval dataset")->required();
  finetune->add_option("--out", ft.out_dir, "")->required();
  finetune->add_option("--init", ft_init, "random | linprobe | wi");
  finetune->add_option("--mode", ft_mode, "none | full | partial | adapter | bn");
  finetune->add_option("--m", ft.m, "Gallery images per identity");
  finetune->add_option("--split-seed", ft.split_seed, "");
  finetune->add_option("--seed", ft.train.seed, "");
  finetune->add_option("--epochs", ft.train.epochs, "");
  finetune->add_option("--batch", ft.train.batch_size, "");
  finetune->add_option("--lr", ft.train.learning_rate,
                       "0 picks the regime default");
  finetune->add_option("--jitter", ft.train.input_jitter, "");
  finetune->add_option("--scale", ft.loss.scale, "");
  finetune->add_option("--margin", ft.loss.margin, "");

  // eval
  osfi::EvalOptions ev;
  std::string ev_matcher = "cos";
  auto* eval_cmd = app.add_subcommand("eval", "Open-set evaluation");
  add_config_option(eval_cmd);
  eval_cmd->add_option("--checkpoint", ev.checkpoint_path, "");
  eval_cmd->add_option("--data", ev.data_path, "Raw eval dataset");
  eval_cmd->add_option("--embeddings", ev.embeddings_path,
                       "Pre-encoded embedding file (skips the encoder)");
  eval_cmd->add_option("--out", ev.out_dir, "")->required();
  eval_cmd->add_option("--matcher", ev_matcher, "cos | nac");
  eval_cmd->add_option("--k", ev.matcher.k, "NAC neighborhood size");
  eval_cmd->add_option("--m", ev.m, "");
  eval_cmd->add_option("--split-seed", ev.split_seed, "");
  eval_cmd->add_option("--far", ev.far_targets, "FAR targets")
      ->delimiter(',');
  eval_cmd->add_option("--bins", ev.histogram_bins, "");
  eval_cmd->add_flag("--minmax", ev.histogram_minmax,
                     "Min-max rescale scores before binning");

  // sweep-k
  osfi::SweepKOptions sk;
  auto* sweep_k = app.add_subcommand("sweep-k", "AUC over the k grid");
  add_config_option(sweep_k);
  sweep_k->add_option("--checkpoint", sk.eval.checkpoint_path, "");
  sweep_k->add_option("--data", sk.eval.data_path, "");
  sweep_k->add_option("--embeddings", sk.eval.embeddings_path, "");
  sweep_k->add_option("--out", sk.eval.out_dir, "")->required();
  sweep_k->add_option("--m", sk.eval.m, "");
  sweep_k->add_option("--split-seed", sk.eval.split_seed, "");
  sweep_k->add_option("--grid", sk.grid, "k grid")->delimiter(',');

  // gallery-sweep
  osfi::GallerySweepOptions gs;
  auto* gallery = app.add_subcommand("gallery-sweep",
                                     "Baseline vs proposed over gallery size");
  add_config_option(gallery);
  gallery->add_option("--checkpoint", gs.checkpoint_path, "")->required();
  gallery->add_option("--data", gs.data_path, "")->required();
  gallery->add_option("--out", gs.out_dir, "")->required();
  gallery->add_option("--m-list", gs.m_values, "")->delimiter(',');
  gallery->add_option("--split-seed", gs.split_seed, "");
  gallery->add_option("--seed", gs.train.seed, "");
  gallery->add_option("--epochs", gs.train.epochs, "");
  gallery->add_option("--k", gs.nac_k, "");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (synth->parsed()) {
      const auto report = osfi::run_synth(synth_cfg, synth_out);
      std::printf("pretrain rows: %lld\neval rows: %lld\n",
                  report["pretrain_rows"].get<long long>(),
                  report["eval_rows"].get<long long>());
    } else if (pretrain->parsed()) {
      const auto report = osfi::run_pretrain(pre);
      std::printf("epochs run: %d, final train accuracy: %.4f%s\n",
                  report["epochs_run"].get<int>(),
                  report["final_accuracy"].get<double>(),
                  report["reached_target"].get<bool>() ? "" : " (not converged)");
    } else if (finetune->parsed()) {
      ft.init = osfi::init_scheme_from_string(ft_init);
      ft.mode = osfi::mode_arg_from_string(ft_mode);
      const auto report = osfi::run_finetune(ft);
      const auto& pc = report["param_count"];
      std::printf("init %s, mode %s: %lld/%lld parameters trainable\n",
                  ft_init.c_str(), ft_mode.c_str(),
                  pc["trainable"].get<long long>(),
                  pc["total"].get<long long>());
    } else if (eval_cmd->parsed()) {
      ev.matcher.kind = osfi::matcher_kind_from_string(ev_matcher);
      const auto report = osfi::run_eval(ev);
      std::printf("auc: %.6f  closed-set: %.6f\n",
                  report["auc"].get<double>(),
                  report["closed_set_accuracy"].get<double>());
      for (auto it = report["dir_at_far"].begin();
           it != report["dir_at_far"].end(); ++it) {
        std::printf("dir@far=%s: %.6f\n", it.key().c_str(),
                    it.value().get<double>());
      }
    } else if (sweep_k->parsed()) {
      const auto report = osfi::run_sweep_k(sk);
      for (const auto& row : report["rows"]) {
        std::printf("%-4s k=%-5d auc=%.6f%s\n",
                    row["matcher"].get<std::string>().c_str(),
                    row["k"].get<int>(), row["auc"].get<double>(),
                    row["best"].get<bool>() ? "  <- best" : "");
      }
    } else if (gallery->parsed()) {
      const auto report = osfi::run_gallery_sweep(gs);
      for (const auto& row : report["rows"]) {
        std::printf("m=%d baseline=%.6f proposed=%.6f\n", row["m"].get<int>(),
                    row["auc_baseline"].get<double>(),
                    row["auc_proposed"].get<double>());
      }
    }
  } catch (const osfi::ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const osfi::NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 4;
  } catch (const osfi::ProtocolError& e) {
    std::fprintf(stderr, "protocol error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
