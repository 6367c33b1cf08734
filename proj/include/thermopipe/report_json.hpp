#pragma once

// JSON forms of the reports written by the command-line tool.

#include <filesystem>

#include "json.hpp"
#include "thermopipe/bench.hpp"
#include "thermopipe/dataset.hpp"
#include "thermopipe/eval.hpp"
#include "thermopipe/frame.hpp"

namespace thermopipe {

nlohmann::json to_json(const FrameStats& stats);
nlohmann::json to_json(const Detection& det);
nlohmann::json to_json(const EvalReport& report);
nlohmann::json to_json(const DatasetStats& stats, const ClassScheme& scheme);
nlohmann::json to_json(const BenchReport& report);
nlohmann::json to_json(const ThrottleStatus& status);

/// Accepts a bare BenchReport object or a document holding one under "bench".
BenchReport bench_report_from_json(const nlohmann::json& doc);
BenchReport load_bench_report(const std::filesystem::path& path);

}  // namespace thermopipe
