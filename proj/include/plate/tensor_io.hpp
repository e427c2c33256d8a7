#pragma once

#include <filesystem>
#include <string>

#include "plate/adapters.hpp"
#include "plate/model.hpp"
#include "plate/numerics/matrix.hpp"

namespace plate {

// Checkpoints are directories holding manifest.json plus one raw
// little-endian float64 row-major file per tensor.

/// Writes `contents` to a sibling temp file, then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

std::string read_file(const std::filesystem::path& path);

void write_tensor(const std::filesystem::path& path, const Matrix& m);
/// Throws FormatError (with byte offset) if the file length does not match.
Matrix read_tensor(const std::filesystem::path& path, std::size_t rows, std::size_t cols);

/// A single weight matrix W (kind "weights").
void save_weights(const Matrix& w, const std::filesystem::path& dir);
Matrix load_weights(const std::filesystem::path& dir);

void save_model(const Mlp& model, const std::filesystem::path& dir);
Mlp load_model(const std::filesystem::path& dir);

void save_plate_adapter(const PlateAdapter& adapter, const std::filesystem::path& dir);
PlateAdapter load_plate_adapter(const std::filesystem::path& dir);

/// Per-layer adapters of a run (plate, lora, full or frozen per layer).
void save_layer_adapters(const LayerAdapters& adapters, const std::filesystem::path& dir);
LayerAdapters load_layer_adapters(const std::filesystem::path& dir);

}  // namespace plate
