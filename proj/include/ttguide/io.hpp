#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "ttguide/adapters.hpp"
#include "ttguide/tasks.hpp"
#include "ttguide/trainer.hpp"

namespace ttguide {

using json = nlohmann::ordered_json;

/// Shortest decimal that round-trips, so reports are byte-stable.
std::string format_double(double v);

/// Dataset file: header of four little-endian u64 (N, P, Q, seed), then inputs as
/// row-major little-endian f64, then labels as little-endian u32. Metadata goes to
/// a JSON sidecar next to it (same stem, .json extension).
void write_dataset(const std::filesystem::path& file, const Dataset& d);
Dataset read_dataset(const std::filesystem::path& file);
std::filesystem::path sidecar_path(const std::filesystem::path& file);
json dataset_metadata(const Dataset& d);

json format_to_json(const TTFormat& f);
TTFormat format_from_json(const json& j);
json tt_to_json(const TTMatrix<double>& tt);
TTMatrix<double> tt_from_json(const json& j);

/// Full adapter checkpoint (kind, shapes, every trainable value, and z for TensorGuide).
json adapter_to_json(const Adapter& a);
Adapter adapter_from_json(const json& j);

/// epoch,train_loss,train_acc,test_loss,test_acc,exp_loss
std::string metrics_csv(const TrainReport& r);
/// Final-epoch metrics, param_count, seed. Wall-clock time is left out on purpose.
json report_summary(const TrainReport& r);

void write_text(const std::filesystem::path& file, const std::string& text);
void write_json(const std::filesystem::path& file, const json& j);
json read_json(const std::filesystem::path& file);

} // namespace ttguide
