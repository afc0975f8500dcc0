#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vpf/error.hpp"
#include "vpf/pipeline.hpp"

namespace {

/// Frame selector: comma-separated ids, or "all" to scan the data root.
std::vector<std::string> resolve_frames(const vpf::PipelineConfig& cfg, const std::string& spec) {
  if (spec == "all") return vpf::list_frames(cfg);
  std::vector<std::string> frames;
  std::size_t pos = 0;
  while (pos <= spec.size()) {
    std::size_t comma = spec.find(',', pos);
    if (comma == std::string::npos) comma = spec.size();
    if (comma > pos) frames.push_back(spec.substr(pos, comma - pos));
    pos = comma + 1;
  }
  return frames;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"virtual-point LiDAR-stereo fusion pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int jobs = 0;
  std::string data_root_flag;
  app.add_option("--config", config_path, "JSON pipeline configuration");
  app.add_option("--seed", seed, "override the config seed")->each([&](const std::string&) {
    seed_set = true;
  });
  app.add_option("--jobs", jobs, "frame-level worker count");
  app.add_option("--data-root", data_root_flag, "override the config data root");

  std::string frames_spec = "all";
  std::string frame_id;
  std::string out_dir;
  std::string bank_dir_flag;
  std::string proposals_path;
  std::string detections_dir;
  std::string csv_path;
  bool from_labels = false;
  bool apply_resize = false;
  int repeats = 3;

  CLI::App* ingest = app.add_subcommand("ingest", "validate every artifact of the listed frames");
  ingest->add_option("--frames", frames_spec, "comma-separated frame ids or 'all'");

  CLI::App* bank = app.add_subcommand("bank", "build the cut-n-paste sample bank");
  bank->add_option("--frames", frames_spec, "comma-separated frame ids or 'all'");
  bank->add_option("--out", out_dir, "bank output directory")->required();

  CLI::App* augment = app.add_subcommand("augment", "write augmented copies of the listed frames");
  augment->add_option("--frames", frames_spec, "comma-separated frame ids or 'all'");
  augment->add_option("--out", out_dir, "augmented dataset directory")->required();
  augment->add_option("--bank", bank_dir_flag, "sample bank directory (built when absent)");

  CLI::App* fuse = app.add_subcommand("fuse", "run the fusion chain for one frame");
  fuse->add_option("--frame", frame_id, "frame id")->required();
  fuse->add_option("--proposals", proposals_path, "proposal file `x y z w l h theta [score]`");
  fuse->add_flag("--from-labels", from_labels, "use the frame's labels as proposals");
  fuse->add_flag("--resize", apply_resize, "apply training-style random proposal resizing");
  fuse->add_option("--out", out_dir, "dump directory")->required();

  CLI::App* eval = app.add_subcommand("eval", "score detection dumps against dataset labels");
  eval->add_option("--detections", detections_dir, "directory of detection files")->required();
  eval->add_option("--dump-csv", csv_path, "write PR samples and height bins as CSV");

  CLI::App* bench = app.add_subcommand("bench", "sweep virtual-point density and spconv depth");
  bench->add_option("--frame", frame_id, "frame id (default: first frame)");
  bench->add_option("--repeats", repeats, "timing repeats per setting");
  bench->add_option("--dump-csv", csv_path, "write the timing table as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return vpf::kExitUsageError;
  }

  try {
    vpf::PipelineConfig cfg =
        config_path.empty() ? vpf::default_pipeline_config() : vpf::load_pipeline_config(config_path);
    if (seed_set) cfg.seed = seed;
    if (jobs > 0) cfg.jobs = jobs;
    if (!data_root_flag.empty()) cfg.data_root = data_root_flag;
    if (const char* env_root = std::getenv("VPF_DATA_ROOT")) cfg.data_root = env_root;
    if (!bank_dir_flag.empty()) cfg.bank_dir = bank_dir_flag;
    vpf::validate_config(cfg);

    if (ingest->parsed()) {
      return vpf::run_ingest(cfg, resolve_frames(cfg, frames_spec), std::cout);
    }
    if (bank->parsed()) {
      return vpf::run_bank(cfg, resolve_frames(cfg, frames_spec), out_dir, std::cout);
    }
    if (augment->parsed()) {
      return vpf::run_augment(cfg, resolve_frames(cfg, frames_spec), out_dir, std::cout);
    }
    if (fuse->parsed()) {
      if (!from_labels && proposals_path.empty()) {
        std::cerr << "fuse: need --proposals or --from-labels\n";
        return vpf::kExitUsageError;
      }
      vpf::FuseOptions options;
      options.proposals_path = proposals_path;
      options.proposals_from_labels = from_labels;
      options.apply_resize = apply_resize;
      return vpf::run_fuse(cfg, frame_id, options, out_dir, std::cout);
    }
    if (eval->parsed()) {
      return vpf::run_eval(cfg, detections_dir, csv_path, std::cout);
    }
    if (bench->parsed()) {
      std::string frame = frame_id;
      if (frame.empty()) {
        const auto frames = vpf::list_frames(cfg);
        if (frames.empty()) {
          std::cerr << "bench: no frames under " << cfg.data_root << "\n";
          return vpf::kExitValidationFailure;
        }
        frame = frames.front();
      }
      return vpf::run_bench(cfg, frame, vpf::default_bench_settings(), repeats, csv_path,
                            std::cout);
    }
  } catch (const vpf::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return vpf::kExitValidationFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return vpf::kExitValidationFailure;
  }
  return vpf::kExitUsageError;
}
