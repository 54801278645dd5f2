#pragma once

#include <filesystem>
#include <string>

#include "roiex/classifier.hpp"
#include "roiex/extractor.hpp"

namespace roiex {

// Single-file checkpoints: parameters and buffers plus the build config and
// seed as an embedded JSON string.
void save_classifier(const SceneClassifier& model, const std::filesystem::path& path);
SceneClassifier load_classifier(const std::filesystem::path& path);

void save_extractor(const RoiUNet& model, const std::filesystem::path& path);
RoiUNet load_extractor(const std::filesystem::path& path);

}  // namespace roiex
