// Command-line front end: training, retrieval evaluation, the masking cost
// curve emitter, caption augmentation and a few dataset utilities.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "flap/augment.hpp"
#include "flap/evaluation.hpp"
#include "flap/flops.hpp"
#include "flap/manifest.hpp"
#include "flap/synthetic.hpp"
#include "flap/text.hpp"
#include "flap/training.hpp"

namespace fs = std::filesystem;

namespace {

std::vector<double> parse_ratio_list(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) {
      out.push_back(std::stod(item));
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FLAP: masked contrastive audio-text pretraining"};
  app.require_subcommand(1);

  // --- train ---------------------------------------------------------------
  std::string train_config, train_manifest, train_out;
  auto* train_cmd = app.add_subcommand("train", "run the training loop");
  train_cmd->add_option("--config", train_config, "key = value config file")
      ->required();
  train_cmd->add_option("--manifest", train_manifest, "JSONL caption manifest")
      ->required();
  train_cmd->add_option("--out-dir", train_out, "overrides out_dir from config");

  // --- evaluate --------------------------------------------------------------
  std::string eval_config, eval_ckpt, eval_vocab, eval_manifest, eval_json;
  auto* eval_cmd =
      app.add_subcommand("evaluate", "cross-modal retrieval metrics");
  eval_cmd->add_option("--config", eval_config, "config used for training")
      ->required();
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--vocab", eval_vocab, "vocab file")->required();
  eval_cmd->add_option("--manifest", eval_manifest, "evaluation manifest")
      ->required();
  eval_cmd->add_option("--json", eval_json, "also write the report as JSON");

  // --- flops-curve ------------------------------------------------------------
  std::string curve_strategy = "2d", curve_ratios = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9";
  std::string curve_out;
  flap::flops::EncoderDims curve_dims;  // MAViL-B-like defaults
  size_t curve_tokens = 504, curve_groups = 63, curve_batch = 8;
  auto* curve_cmd = app.add_subcommand(
      "flops-curve", "emit the masking-ratio cost curve as CSV");
  curve_cmd->add_option("--strategy", curve_strategy, "1d or 2d");
  curve_cmd->add_option("--ratios", curve_ratios, "comma-separated ratios");
  curve_cmd->add_option("--tokens", curve_tokens, "unmasked token count N");
  curve_cmd->add_option("--groups", curve_groups, "2-D group count M");
  curve_cmd->add_option("--depth", curve_dims.depth, "encoder depth");
  curve_cmd->add_option("--width", curve_dims.width, "embedding width D");
  curve_cmd->add_option("--heads", curve_dims.heads, "attention heads");
  curve_cmd->add_option("--mlp-ratio", curve_dims.mlp_ratio, "MLP ratio");
  curve_cmd->add_option("--batch", curve_batch, "batch size for GFLOPs");
  curve_cmd->add_option("--out", curve_out, "CSV path (default stdout)");

  // --- augment ----------------------------------------------------------------
  std::string aug_manifest, aug_endpoint, aug_tagger = "file", aug_tags_dir;
  std::string aug_out_captions, aug_out_manifest, aug_auth;
  bool aug_cleaned = false;
  auto* aug_cmd = app.add_subcommand(
      "augment", "enrich captions via audio tags and a text-generation endpoint");
  aug_cmd->add_option("--manifest", aug_manifest, "input manifest")->required();
  aug_cmd->add_option("--endpoint", aug_endpoint,
                      "base URL of the generation endpoint")
      ->required();
  aug_cmd->add_option("--tagger", aug_tagger, "file or heuristic");
  aug_cmd->add_option("--tags-dir", aug_tags_dir,
                      "sidecar directory for the file tagger");
  aug_cmd->add_option("--auth", aug_auth, "Authorization header value");
  aug_cmd->add_option("--out-captions", aug_out_captions,
                      "augmented captions JSONL")
      ->required();
  aug_cmd->add_option("--out-manifest", aug_out_manifest, "merged manifest path")
      ->required();
  aug_cmd->add_flag("--cleaned-prompt", aug_cleaned,
                    "use the grammatical prompt variant");

  // --- build-vocab -----------------------------------------------------------
  std::string vocab_manifest, vocab_out;
  auto* vocab_cmd = app.add_subcommand("build-vocab", "build the word vocabulary");
  vocab_cmd->add_option("--manifest", vocab_manifest, "input manifest")->required();
  vocab_cmd->add_option("--out", vocab_out, "vocab file")->required();

  // --- make-synthetic ----------------------------------------------------------
  std::string synth_dir;
  size_t synth_pairs = 64;
  double synth_seconds = 1.0;
  auto* synth_cmd = app.add_subcommand(
      "make-synthetic", "write the tone/caption sanity dataset");
  synth_cmd->add_option("--out-dir", synth_dir, "output directory")->required();
  synth_cmd->add_option("--pairs", synth_pairs, "number of pairs");
  synth_cmd->add_option("--seconds", synth_seconds, "clip length");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      auto config = flap::training::TrainConfig::from_file(train_config);
      if (!train_out.empty()) {
        config.out_dir = train_out;
      }
      auto manifest = flap::data::load_manifest(train_manifest);
      auto result = flap::training::train(manifest, config);
      std::cout << "trained " << result.steps << " steps\n"
                << "checkpoint: " << result.checkpoint_path << "\n"
                << "log:        " << result.log_path << "\n"
                << "vocab:      " << result.vocab_path << "\n";
      if (!result.history.empty()) {
        std::cout << "final loss:  " << result.history.back().loss.total << "\n";
      }
    } else if (*eval_cmd) {
      auto config = flap::training::TrainConfig::from_file(eval_config);
      auto manifest = flap::data::load_manifest(eval_manifest);
      auto reports = flap::eval::evaluate_checkpoint(eval_ckpt, eval_vocab,
                                                     manifest, config);
      std::cout << flap::eval::report_to_table(reports);
      if (!eval_json.empty()) {
        std::ofstream os(eval_json, std::ios::trunc);
        os << flap::eval::report_to_json(reports) << "\n";
        std::cout << "report written to " << eval_json << "\n";
      }
    } else if (*curve_cmd) {
      auto strategy = curve_strategy == "1d" ? flap::masking::Strategy::mask1d
                                             : flap::masking::Strategy::mask2d;
      if (curve_strategy != "1d" && curve_strategy != "2d") {
        throw std::runtime_error("--strategy must be 1d or 2d");
      }
      auto rows = flap::flops::masking_cost_curve(
          curve_dims, curve_tokens, curve_batch, strategy,
          parse_ratio_list(curve_ratios), curve_groups);
      std::string csv = flap::flops::curve_to_csv(rows);
      if (curve_out.empty()) {
        std::cout << csv;
      } else {
        std::ofstream os(curve_out, std::ios::trunc);
        os << csv;
        std::cout << "curve written to " << curve_out << "\n";
      }
    } else if (*aug_cmd) {
      auto manifest = flap::data::load_manifest(aug_manifest,
                                                aug_tagger != "file");
      std::unique_ptr<flap::augment::Tagger> tagger;
      if (aug_tagger == "file") {
        if (aug_tags_dir.empty()) {
          throw std::runtime_error("--tags-dir is required with the file tagger");
        }
        tagger = std::make_unique<flap::augment::FileTagger>(aug_tags_dir);
      } else if (aug_tagger == "heuristic") {
        tagger = std::make_unique<flap::augment::HeuristicTagger>();
      } else {
        throw std::runtime_error("--tagger must be file or heuristic");
      }
      flap::augment::EndpointConfig endpoint;
      endpoint.base_url = aug_endpoint;
      endpoint.auth_header = aug_auth;
      flap::augment::AugmentOptions options;
      options.cleaned_prompt = aug_cleaned;
      auto augmented =
          flap::augment::run_augmentation(manifest, *tagger, endpoint, options);
      flap::augment::save_augmented_jsonl(aug_out_captions, augmented);
      auto merged = flap::augment::merge_manifest(manifest, augmented);
      flap::data::save_manifest(aug_out_manifest, merged);
      std::cout << "augmented " << augmented.size() << " of "
                << manifest.records.size() << " records\n"
                << "captions: " << aug_out_captions << "\n"
                << "manifest: " << aug_out_manifest << "\n";
    } else if (*vocab_cmd) {
      auto manifest = flap::data::load_manifest(vocab_manifest, false);
      auto vocab = flap::text::build_vocab(manifest);
      vocab.save(vocab_out);
      std::cout << "vocab of " << vocab.size() << " tokens written to "
                << vocab_out << "\n";
    } else if (*synth_cmd) {
      auto manifest =
          flap::data::make_tone_dataset(synth_dir, synth_pairs, synth_seconds);
      std::cout << "wrote " << manifest.records.size() << " pairs under "
                << synth_dir << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
