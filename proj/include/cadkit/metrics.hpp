#pragma once

#include "cadkit/image.hpp"
#include "cadkit/quantize.hpp"
#include "cadkit/sketch.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cadkit {

inline constexpr std::int64_t kTypeMismatchCost = 1'000'000;
/// Quantization units within which a parameter still counts as correct.
inline constexpr int kParameterTolerance = 5;

/// Minimum-cost assignment on a rectangular integer matrix. Among optimal
/// assignments the one whose row-to-column vector is lexicographically
/// smallest is returned. Entry i is the column of row i or -1.
std::vector<int> solve_assignment(const std::vector<std::vector<std::int64_t>>& cost);

struct Matching {
    std::vector<std::pair<PrimitiveId, PrimitiveId>> pairs;
    std::vector<PrimitiveId> unmatched_gt;
    std::vector<PrimitiveId> unmatched_pred;
    std::int64_t total_cost = 0;
};

/// Token L1 (angles circular, clockwise arcs compared with swapped angles) for
/// same-type pairs, kTypeMismatchCost otherwise.
std::int64_t match_cost(const QuantizedPrimitive& gt, const QuantizedPrimitive& pred, int bins = kQuantizationBins);
/// Same type and every token within kParameterTolerance.
bool primitive_matches(const QuantizedPrimitive& gt, const QuantizedPrimitive& pred, int bins = kQuantizationBins);

Matching match_primitives(const QuantizedSketch& gt, const QuantizedSketch& pred);
/// Quantizes both sketches on the gt normalization first.
Matching match_primitives(const SketchGraph& gt, const SketchGraph& pred);

struct F1Counts {
    int tp = 0;
    int fp = 0;
    int fn = 0;

    double precision() const;
    double recall() const;
    /// 2PR / (P + R), 0 when undefined.
    double f1() const;
    F1Counts& operator+=(const F1Counts& o);
};

struct SketchScore {
    F1Counts primitives;
    F1Counts constraints;
    double pf1 = 0.0;
    double cf1 = 0.0;
    int tokens_total = 0;
    int tokens_correct = 0;
    double acc = 0.0;
    Matching matching;
};

/// PF1, CF1 and token accuracy of `pred` against `gt`, both quantized on the
/// gt normalization.
SketchScore score_sketch(const SketchGraph& gt, const SketchGraph& pred);
double pf1(const SketchGraph& gt, const SketchGraph& pred);
double cf1(const SketchGraph& gt, const SketchGraph& pred);
/// Fraction of gt tokens reproduced exactly by the matched prediction.
double accuracy(const SketchGraph& gt, const SketchGraph& pred);

/// Exact squared Euclidean distance transform to the nearest foreground
/// pixel (separable lower-envelope algorithm). Throws EmptyMask.
std::vector<double> squared_distance_transform(const RasterImage& mask);
/// Bidirectional chamfer distance in squared pixels. Throws EmptyMask and
/// SizeMismatch.
double chamfer(const RasterImage& a, const RasterImage& b);

struct EvalItem {
    std::string name;
    double pf1 = 0.0;
    double cf1 = 0.0;
    double acc = 0.0;
    double cd = 0.0;
    int skipped_constraints = 0;
    std::string error;
};

struct EvalReport {
    std::string task;
    double pf1 = 0.0;
    double cf1 = 0.0;
    double acc = 0.0;
    double cd = 0.0;
    double cd_normalized = 0.0;
    int image_size = 512;
    F1Counts primitive_counts;
    F1Counts constraint_counts;
    std::vector<EvalItem> items;

    int failed() const;
    nlohmann::ordered_json to_json() const;
    std::string to_table() const;
};

struct AutoconstrainItem {
    std::string name;
    /// Ground-truth primitives with their constraints.
    SketchGraph gt;
    /// Predicted constraints over the gt primitive ids.
    std::vector<Constraint> predicted;
};

/// Applies predicted constraints to the bare gt primitives, solves, and
/// scores against the solved gt sketch. Item failures are recorded and
/// scored as zero.
EvalReport run_autoconstrain_eval(const std::vector<AutoconstrainItem>& items);

struct ParamItem {
    std::string name;
    SketchGraph gt;
    SketchGraph predicted;
};

/// Solves both sketches, scores token accuracy after matching and the chamfer
/// distance of 512x512 renders in the gt frame.
EvalReport run_param_eval(const std::vector<ParamItem>& items, int image_size = 512);

/// Pairs `<name>.sketch.json` files of two directories. The gt directory may
/// hold a manifest.json ({"items": [names]}); otherwise every sketch file is
/// used in name order. A missing or unreadable prediction leaves
/// `predicted` empty and records the problem in `error`.
struct BenchmarkPair {
    std::string name;
    SketchGraph gt;
    std::optional<SketchGraph> predicted;
    std::string error;
};
std::vector<BenchmarkPair> load_benchmark(const std::filesystem::path& gt_dir, const std::filesystem::path& pred_dir);
EvalReport run_autoconstrain_eval(const std::vector<BenchmarkPair>& pairs);
EvalReport run_param_eval(const std::vector<BenchmarkPair>& pairs, int image_size = 512);

struct QAItem {
    std::string question;
    std::vector<std::string> options;
    int gold = 0;
    std::optional<int> predicted;
};

struct QAReport {
    double accuracy = 0.0;
    int total = 0;
    int correct = 0;
    /// Indices of items without an answer; they count as wrong.
    std::vector<int> unanswered;

    nlohmann::ordered_json to_json() const;
};

/// `gold` may be an option index or a one-hot list. Throws SchemaError.
QAItem qa_item_from_json(const nlohmann::json& j);
std::vector<QAItem> parse_qa_jsonl(const std::string& text);
QAReport score_qa(const std::vector<QAItem>& items);

} // namespace cadkit
