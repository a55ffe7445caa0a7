#include "cpd/app/config.hpp"
#include "cpd/app/kinematics.hpp"
#include "cpd/app/pipeline.hpp"
#include "cpd/app/protocols.hpp"
#include "cpd/composer/composer.hpp"
#include "cpd/diffusion/train.hpp"
#include "cpd/error.hpp"
#include "cpd/metrics/metrics.hpp"
#include "cpd/synth/corpus.hpp"
#include "cpd/text.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <map>
#include <optional>

namespace fs = std::filesystem;
using namespace cpd;
using app::RunConfig;

namespace {

// Exit statuses; see README.
int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return 2;
    case ErrorKind::ShapeMismatch: return 3;
    case ErrorKind::NumericalFailure: return 4;
    case ErrorKind::MissingCheckpoint: return 5;
    case ErrorKind::DigestMismatch: return 6;
    case ErrorKind::MalformedConfig: return 7;
    case ErrorKind::MalformedFile: return 8;
    case ErrorKind::Untrained: return 9;
  }
  return 1;
}

constexpr int kUsageError = 10;

const char* kind_label(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid argument";
    case ErrorKind::ShapeMismatch: return "shape mismatch";
    case ErrorKind::NumericalFailure: return "numerical failure";
    case ErrorKind::MissingCheckpoint: return "missing checkpoint";
    case ErrorKind::DigestMismatch: return "digest mismatch";
    case ErrorKind::MalformedConfig: return "malformed config";
    case ErrorKind::MalformedFile: return "malformed file";
    case ErrorKind::Untrained: return "untrained model";
  }
  return "error";
}

void write_config(const fs::path& dir, const std::string& command, const RunConfig& cfg) {
  app::write_text_file(dir / (command + ".config"), "# resolved settings of cpd " + command + "\n" + cfg.describe());
}

std::vector<std::string> segment_names(const composer::Composition& c) {
  std::vector<std::string> names;
  for (int id = 0; id < c.chain.node_count(); ++id)
    names.push_back((id % 2 == 0 ? "S" : "T") + std::to_string(id / 2));
  return names;
}

void write_composition(const fs::path& dir, const std::string& stem, const composer::Composition& c,
                       const phase::MotionSegment& motion) {
  std::filesystem::create_directories(dir);
  phase::save_motion(dir / (stem + ".motion"), motion);
  app::write_text_file(dir / (stem + ".provenance"), composer::format_provenance(c, segment_names(c)));
}

void cmd_synth(const RunConfig& cfg) {
  const synth::Corpus corpus = synth::generate_corpus(cfg.corpus());
  synth::write_corpus(cfg.corpus_dir(), corpus);
  write_config(cfg.corpus_dir(), "synth-data", cfg);
  std::printf("corpus %s: %zu streams, %d train pairs, %d test pairs, %d short spans skipped\n",
              cfg.corpus_dir().string().c_str(), corpus.streams.size(), corpus.count_pairs(false),
              corpus.count_pairs(true), corpus.skipped_spans);
}

void cmd_train_pae(const RunConfig& cfg) {
  const synth::Corpus corpus = synth::read_corpus(cfg.corpus_dir());
  const auto train = app::pae_samples(corpus, false);
  const auto test = app::pae_samples(corpus, true);
  require(!train.empty(), ErrorKind::InvalidArgument, "corpus has no training pairs");
  auto result = phase::train_actpae(train, cfg.pae(), cfg.pae_train(), [](const phase::PaeLogEntry& e) {
    std::printf("epoch %d updates %lld loss %s\n", e.epoch, static_cast<long long>(e.updates),
                format_double(e.loss).c_str());
    std::fflush(stdout);
  });
  const app::CheckpointPaths paths{cfg.checkpoint_dir()};
  fs::create_directories(paths.dir);
  result.model.save(paths.pae());
  app::write_text_file(paths.dir / "pae_loss.log", app::format_loss_log(result.log));
  if (!test.empty()) {
    const phase::RowVec rmse = phase::reconstruction_rmse(result.model, test);
    std::string text = "# held-out per-channel reconstruction rmse\n";
    for (Eigen::Index c = 0; c < rmse.size(); ++c) text += std::to_string(c) + " " + format_double(rmse(c)) + "\n";
    app::write_text_file(paths.dir / "pae_heldout.txt", text);
    std::printf("held-out max channel rmse %s\n", format_double(rmse.maxCoeff()).c_str());
  }
  write_config(paths.dir, "train-pae", cfg);
}

void cmd_train_diffusion(const RunConfig& cfg) {
  const app::CheckpointPaths paths{cfg.checkpoint_dir()};
  const phase::ActPae pae = phase::ActPae::load(paths.pae());
  require(pae.trained(), ErrorKind::Untrained, "phase autoencoder checkpoint is untrained");
  const synth::Corpus corpus = synth::read_corpus(cfg.corpus_dir());
  const auto train = diffusion::encode_pairs(pae, app::pair_samples(corpus, false));
  const auto test = diffusion::encode_pairs(pae, app::pair_samples(corpus, true));
  require(!train.empty(), ErrorKind::InvalidArgument, "corpus has no training pairs");
  std::string log = "# kind epoch updates loss\n";
  auto stack = diffusion::train_denoisers(
      pae, train, cfg.denoiser(synth::vocabulary()), cfg.schedule(), cfg.denoiser_train(),
      [&](diffusion::DenoiserKind kind, const diffusion::DenoiserLogEntry& e) {
        const std::string line = std::string(diffusion::kind_name(kind)) + " " + std::to_string(e.epoch) + " " +
                                 std::to_string(e.updates) + " " + format_double(e.loss);
        log += line + "\n";
        std::printf("%s\n", line.c_str());
        std::fflush(stdout);
      });
  stack.spdm.model.save(paths.spdm());
  stack.tpdm_f.model.save(paths.tpdm_f());
  stack.tpdm_b.model.save(paths.tpdm_b());
  app::write_text_file(paths.dir / "diffusion_loss.log", log);
  if (!test.empty()) {
    std::string text = "# kind heldout_l1 zero_predictor_l1\n";
    for (const diffusion::Denoiser* m : {&stack.spdm.model, &stack.tpdm_f.model, &stack.tpdm_b.model}) {
      const auto l1 = diffusion::heldout_l1(*m, test, cfg.seed("seed"));
      text += std::string(diffusion::kind_name(m->kind())) + " " + format_double(l1.model) + " " +
              format_double(l1.zero) + "\n";
    }
    app::write_text_file(paths.dir / "diffusion_heldout.txt", text);
  }
  write_config(paths.dir, "train-diffusion", cfg);
}

composer::ChainSpec request_or_pair(const RunConfig& cfg) {
  if (!cfg.text("request").empty()) return composer::load_request(cfg.text("request"));
  composer::ChainSpec spec;
  spec.seed = cfg.seed("seed");
  spec.segments = {{cfg.tokens("p_text"), static_cast<int>(cfg.integer("p_frames"))},
                   {cfg.tokens("s_text"), static_cast<int>(cfg.integer("s_frames"))}};
  return spec;
}

void cmd_compose(const RunConfig& cfg, const std::string& command) {
  composer::ChainSpec spec;
  if (command == "longgen") {
    require(!cfg.text("request").empty(), ErrorKind::MalformedConfig, "longgen needs a request file");
    spec = composer::load_request(cfg.text("request"));
  } else {
    spec = request_or_pair(cfg);
    require(spec.segments.size() == 2, ErrorKind::InvalidArgument, "compose takes exactly two segments");
  }
  const app::ModelStack models = app::load_stack({cfg.checkpoint_dir()});
  const composer::Composition c = composer::compose_long(models.view(), spec);
  write_composition(cfg.output_dir(), command, c, c.motion);
  app::write_text_file(cfg.output_dir() / (command + ".request"), composer::format_request(spec));
  write_config(cfg.output_dir(), command, cfg);
  std::printf("%s: %d frames, %zu segments, %d sweeps\n", command.c_str(), c.motion.length(), spec.segments.size(),
              c.sweeps);
}

void cmd_inbetween(const RunConfig& cfg) {
  require(!cfg.text("x_p").empty() && !cfg.text("x_s").empty(), ErrorKind::MalformedConfig,
          "inbetween needs x_p and x_s motion files");
  const phase::MotionSegment x_p = phase::load_motion(cfg.text("x_p"));
  const phase::MotionSegment x_s = phase::load_motion(cfg.text("x_s"));
  const auto tokens = cfg.tokens("text");
  const std::optional<std::vector<std::string>> text =
      tokens.empty() ? std::nullopt : std::optional<std::vector<std::string>>(tokens);
  const app::ModelStack models = app::load_stack({cfg.checkpoint_dir()});
  const composer::Inbetween ib = composer::inbetween(models.view(), x_p, x_s, static_cast<int>(cfg.integer("gap_frames")),
                                                     text, cfg.seed("seed"));
  write_composition(cfg.output_dir(), "inbetween", ib.composition, ib.motion);
  write_config(cfg.output_dir(), "inbetween", cfg);
  std::printf("inbetween: %d frames, gap [%d, %d), %s\n", ib.motion.length(), ib.gap_start,
              ib.gap_start + static_cast<int>(cfg.integer("gap_frames")), text ? "conditioned" : "unconditioned");
}

void cmd_eval(const RunConfig& cfg) {
  const synth::Corpus corpus = synth::read_corpus(cfg.corpus_dir());
  const app::ModelStack models = app::load_stack({cfg.checkpoint_dir()});
  const composer::Stack stack = models.view();
  const std::uint64_t seed = cfg.seed("seed");
  std::vector<metrics::ReportRow> rows;

  const auto umib_cases = app::gap_cases(corpus, static_cast<int>(cfg.integer("eval_gap")),
                                         static_cast<int>(cfg.integer("eval_cases")));
  require(!umib_cases.empty(), ErrorKind::InvalidArgument, "no held-out pairs are long enough for the gap");
  const app::UmibResult u = app::run_umib(stack, umib_cases, seed);
  auto avg = [](const std::vector<app::GapScores>& v, double app::GapScores::*f) {
    double s = 0.0;
    for (const auto& x : v) s += x.*f;
    return s / static_cast<double>(v.size());
  };
  rows.push_back({"l2_vel", "umib_model", avg(u.model, &app::GapScores::l2_vel)});
  rows.push_back({"l2_vel", "umib_linear", avg(u.linear, &app::GapScores::l2_vel)});
  rows.push_back({"l2_rot", "umib_model", avg(u.model, &app::GapScores::l2_rot)});
  rows.push_back({"l2_rot", "umib_linear", avg(u.linear, &app::GapScores::l2_rot)});
  rows.push_back({"npss", "umib_model", avg(u.model, &app::GapScores::npss)});
  rows.push_back({"npss", "umib_linear", avg(u.linear, &app::GapScores::npss)});
  rows.push_back({"rms_jerk", "umib_model", avg(u.model, &app::GapScores::jerk)});
  rows.push_back({"rms_jerk", "umib_linear", avg(u.linear, &app::GapScores::jerk)});
  rows.push_back({"rms_jerk", "umib_truth", app::mean(u.truth_jerk)});
  rows.push_back({"win_rate_l2_vel", "umib", u.vel_win_rate});
  rows.push_back({"win_rate_npss", "umib", u.npss_win_rate});
  rows.push_back({"cases", "umib", static_cast<double>(umib_cases.size())});

  const auto cmib_cases = app::gap_cases(corpus, static_cast<int>(cfg.integer("cmib_gap")),
                                         static_cast<int>(cfg.integer("cmib_cases")));
  if (!cmib_cases.empty()) {
    const app::CmibResult c = app::run_cmib(stack, corpus, cmib_cases, seed);
    rows.push_back({"accuracy", "cmib", c.accuracy});
    rows.push_back({"accuracy", "cmib_chance", c.chance});
    rows.push_back({"accuracy", "classifier_heldout", c.reference_accuracy});
    rows.push_back({"cases", "cmib", static_cast<double>(cmib_cases.size())});
  }

  const app::PairSmoothness p = app::run_pair_smoothness(stack, corpus, static_cast<int>(cfg.integer("pair_runs")), seed);
  rows.push_back({"boundary_gap", "pair_median", p.median_gap});
  rows.push_back({"rms_jerk", "pair_transition", p.mean_jerk});
  rows.push_back({"rms_jerk", "pair_truth", p.mean_truth_jerk});
  rows.push_back({"cases", "pair", static_cast<double>(p.jerk.size())});

  const fs::path dir = cfg.output_dir();
  app::write_text_file(dir / "eval.csv", metrics::format_report_csv(rows));
  const std::string summary = metrics::format_report_summary(rows, "evaluation on held-out pairs");
  app::write_text_file(dir / "eval.txt", summary);
  write_config(dir, "eval", cfg);
  std::printf("%s", summary.c_str());
}

void cmd_export(const RunConfig& cfg) {
  require(!cfg.text("export_input").empty(), ErrorKind::MalformedConfig, "export needs export_input");
  const fs::path in = cfg.text("export_input");
  const phase::MotionSegment m = phase::load_motion(in);
  const fs::path out = cfg.output_dir() / (in.stem().string() + ".joints");
  app::write_text_file(out, app::format_joint_table(m));
  write_config(cfg.output_dir(), "export", cfg);
  std::printf("export: %d frames -> %s\n", m.length(), out.string().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Phase-latent motion composition: corpus synthesis, training, composition and evaluation"};
  cli.fallthrough();
  cli.require_subcommand(1);
  std::string config_file;
  cli.add_option("--config", config_file, "key=value settings file");
  std::map<std::string, std::string> flags;
  for (const auto& k : app::config_keys())
    cli.add_option("--" + k.name, flags[k.name], k.help + " (default: " + (k.fallback.empty() ? "unset" : k.fallback) + ")")
        ->group("Settings");

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"synth-data", "generate the synthetic corpus"},
      {"train-pae", "train the phase autoencoder"},
      {"train-diffusion", "train the semantic and transitional denoisers"},
      {"compose", "compose two segments with a generated transition"},
      {"inbetween", "fill a gap between two clips"},
      {"longgen", "compose a chain of segments from a request file"},
      {"eval", "score inbetweening and composition on held-out pairs"},
      {"export", "convert a motion file to joint positions"},
  };
  for (const auto& [name, help] : commands) cli.add_subcommand(name, help);

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = cli.exit(e);
    return rc == 0 ? 0 : kUsageError;
  }

  const std::string command = cli.get_subcommands().front()->get_name();
  try {
    RunConfig cfg;
    if (!config_file.empty()) cfg.merge_file(config_file);
    for (const auto& k : app::config_keys())
      if (cli.count("--" + k.name) > 0) cfg.set(k.name, flags[k.name]);

    if (command == "synth-data") cmd_synth(cfg);
    else if (command == "train-pae") cmd_train_pae(cfg);
    else if (command == "train-diffusion") cmd_train_diffusion(cfg);
    else if (command == "compose" || command == "longgen") cmd_compose(cfg, command);
    else if (command == "inbetween") cmd_inbetween(cfg);
    else if (command == "eval") cmd_eval(cfg);
    else if (command == "export") cmd_export(cfg);
  } catch (const Error& e) {
    std::fprintf(stderr, "cpd %s: %s (%s)\n", command.c_str(), e.what(), kind_label(e.kind()));
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "cpd %s: %s\n", command.c_str(), e.what());
    return 1;
  }
  return 0;
}
