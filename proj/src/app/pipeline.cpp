#include "cpd/app/pipeline.hpp"

#include "cpd/error.hpp"
#include "cpd/text.hpp"

#include <fstream>

namespace cpd::app {

std::vector<phase::PaeSample> pae_samples(const synth::Corpus& corpus, bool test) {
  std::vector<phase::PaeSample> out;
  for (const auto& p : corpus.pairs) {
    if (p.test != test) continue;
    synth::PairSample s = synth::materialize(corpus, p);
    out.push_back({std::move(s.x_p), phase::center_anchor(p.p_len)});
    out.push_back({std::move(s.x_s), phase::center_anchor(p.s_len)});
    out.push_back({std::move(s.x_t), s.t_anchor});
  }
  return out;
}

std::vector<synth::PairSample> pair_samples(const synth::Corpus& corpus, bool test) {
  std::vector<synth::PairSample> out;
  for (const auto& p : corpus.pairs)
    if (p.test == test) out.push_back(synth::materialize(corpus, p));
  return out;
}

ModelStack load_stack(const CheckpointPaths& paths) {
  ModelStack s{phase::ActPae::load(paths.pae()), diffusion::Denoiser::load(paths.spdm()),
               diffusion::Denoiser::load(paths.tpdm_f()), diffusion::Denoiser::load(paths.tpdm_b())};
  s.view().verify();
  return s;
}

std::string format_loss_log(const std::vector<phase::PaeLogEntry>& log) {
  std::string out = "# epoch updates loss\n";
  for (const auto& e : log)
    out += std::to_string(e.epoch) + " " + std::to_string(e.updates) + " " + format_double(e.loss) + "\n";
  return out;
}

std::string format_loss_log(const std::vector<diffusion::DenoiserLogEntry>& log) {
  std::string out = "# epoch updates loss\n";
  for (const auto& e : log)
    out += std::to_string(e.epoch) + " " + std::to_string(e.updates) + " " + format_double(e.loss) + "\n";
  return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(os), ErrorKind::InvalidArgument, "cannot write " + path.string());
  os << text;
  require(static_cast<bool>(os), ErrorKind::InvalidArgument, "failed writing " + path.string());
}

}  // namespace cpd::app
