// Command-line front end: corrupt / train / denoise / eval / inspect / synth.
//
// Exit codes: 0 success, 1 usage error, 2 I/O error, 3 numeric failure.

#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "gdd/commands.hpp"
#include "gdd/error.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::string sigma;
  std::string out;
  std::map<std::string, std::string> fields;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "key = value configuration file");
  cmd->add_option("--sigma", flags.sigma, "noise level on the 0-255 scale (sets sigma_train and sigma_test)");
  cmd->add_option("--out", flags.out, "output directory (same as --output_dir)");
  for (const std::string& key : gdd::RunConfig::keys()) {
    cmd->add_option("--" + key, flags.fields[key], "override config field '" + key + "'");
  }
}

gdd::RunConfig resolve(const CLI::App* cmd, const CommonFlags& flags) {
  gdd::RunConfig config;
  if (!flags.config_path.empty()) config = gdd::load_config(flags.config_path);
  if (!flags.sigma.empty()) {
    config.set("sigma_train", flags.sigma);
    config.set("sigma_test", flags.sigma);
  }
  if (!flags.out.empty()) config.set("output_dir", flags.out);
  for (const auto& [key, value] : flags.fields) {
    if (cmd->count("--" + key) > 0) config.set(key, value);
  }
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph-based deep denoiser: bilateral-initialized unrolled CG on a learned graph Laplacian"};
  app.require_subcommand(1);

  struct Sub {
    const char* name;
    const char* help;
  };
  const Sub subs[] = {
      {"corrupt", "add seeded Gaussian noise to every image of --input"},
      {"train", "train on --train_dir, validate on --test_dir"},
      {"denoise", "denoise --input with a checkpoint"},
      {"eval", "PSNR table vs sigma for bilateral, untrained and trained models"},
      {"inspect", "report learned parameters and spectrum diagnostics"},
      {"synth", "write a synthetic image corpus"},
  };
  std::map<std::string, CommonFlags> flags;
  std::map<std::string, CLI::App*> commands;
  int synth_count = 10;
  int synth_size = 128;
  for (const Sub& s : subs) {
    CLI::App* cmd = app.add_subcommand(s.name, s.help);
    add_common(cmd, flags[s.name]);
    commands[s.name] = cmd;
  }
  commands["synth"]->add_option("--count", synth_count, "number of images")->capture_default_str();
  commands["synth"]->add_option("--size", synth_size, "image side in pixels")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    for (const auto& [name, cmd] : commands) {
      if (!cmd->parsed()) continue;
      const gdd::RunConfig config = resolve(cmd, flags[name]);
      if (name == "corrupt") {
        gdd::cli::cmd_corrupt(config, std::cout);
      } else if (name == "train") {
        gdd::cli::cmd_train(config, std::cout);
      } else if (name == "denoise") {
        gdd::cli::cmd_denoise(config, std::cout);
      } else if (name == "eval") {
        gdd::cli::cmd_eval(config, std::cout);
      } else if (name == "inspect") {
        gdd::cli::cmd_inspect(config, std::cout);
      } else if (name == "synth") {
        gdd::cli::cmd_synth(config, synth_count, synth_size, std::cout);
      }
    }
  } catch (const gdd::InvalidInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const gdd::IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return 2;
  } catch (const gdd::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 3;
  } catch (const gdd::DegenerateMatrix& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
