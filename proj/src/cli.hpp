#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "hnn/config.hpp"
#include "hnn/model.hpp"
#include "hnn/vocab.hpp"

namespace hnn::cli {

enum ExitCode : int { kOk = 0, kDataError = 1, kConfigError = 2 };

/// Runs one command line (arguments after the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct LoadedModel {
    RunConfig config;
    Vocab vocab;
    HnnModel model;
};

/// Model stored in a training output directory; `weights` names the parameter
/// file inside it (or is a path of its own).
LoadedModel load_model(const std::filesystem::path& ckpt, const std::string& weights = "model.bin");

}  // namespace hnn::cli
