#include "cadkit/metrics.hpp"

#include "cadkit/render.hpp"
#include "cadkit/serialization.hpp"
#include "cadkit/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

namespace cadkit {

namespace {

using CostMatrix = std::vector<std::vector<std::int64_t>>;

struct HungarianResult {
    std::vector<int> row_to_col;
    std::vector<std::int64_t> u;
    std::vector<std::int64_t> v;
};

/// Shortest augmenting path Hungarian method on a square matrix.
HungarianResult hungarian(const CostMatrix& a) {
    const int n = static_cast<int>(a.size());
    constexpr std::int64_t inf = std::numeric_limits<std::int64_t>::max() / 4;
    std::vector<std::int64_t> u(n + 1, 0);
    std::vector<std::int64_t> v(n + 1, 0);
    std::vector<int> p(n + 1, 0);
    std::vector<int> way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<std::int64_t> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            std::int64_t delta = inf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) {
                    continue;
                }
                const std::int64_t cur = a[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    HungarianResult r;
    r.row_to_col.assign(n, -1);
    for (int j = 1; j <= n; ++j) {
        if (p[j] != 0) {
            r.row_to_col[p[j] - 1] = j - 1;
        }
    }
    r.u.assign(u.begin() + 1, u.end());
    r.v.assign(v.begin() + 1, v.end());
    return r;
}

/// Lexicographically smallest perfect matching among the edges that are tight
/// under optimal duals; every such matching is optimal.
std::vector<int> lexicographic_optimum(const CostMatrix& a, const HungarianResult& h) {
    const int n = static_cast<int>(a.size());
    auto tight = [&](int i, int j) { return a[i][j] - h.u[i] - h.v[j] == 0; };
    std::vector<int> row = h.row_to_col;
    std::vector<int> col(n, -1);
    for (int i = 0; i < n; ++i) {
        col[row[i]] = i;
    }
    std::vector<char> fixed_col(n, 0);
    std::vector<char> seen(n, 0);
    std::vector<int> path;
    // Alternating path from row r to the freed column `target`, avoiding fixed
    // columns and `blocked`.
    auto search = [&](auto&& self, int r, int target, int blocked) -> bool {
        for (int c = 0; c < n; ++c) {
            if (fixed_col[c] || c == blocked || seen[c] || !tight(r, c)) {
                continue;
            }
            seen[c] = 1;
            path.push_back(c);
            if (c == target || self(self, col[c], target, blocked)) {
                return true;
            }
            path.pop_back();
        }
        return false;
    };
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (fixed_col[j] || !tight(i, j)) {
                continue;
            }
            if (row[i] == j) {
                break;
            }
            const int freed = row[i];
            const int displaced = col[j];
            std::fill(seen.begin(), seen.end(), 0);
            path.clear();
            if (!search(search, displaced, freed, j)) {
                continue;
            }
            // Shift the rows along the path, then give j to row i.
            int r = displaced;
            for (int c : path) {
                const int next = col[c];
                row[r] = c;
                col[c] = r;
                r = next;
            }
            row[i] = j;
            col[j] = i;
            break;
        }
        fixed_col[row[i]] = 1;
    }
    return row;
}

std::vector<int> oriented_tokens(const QuantizedPrimitive& q) {
    std::vector<int> t = q.tokens;
    if (q.type == PrimitiveType::Arc && q.clockwise && t.size() == 5) {
        std::swap(t[3], t[4]);
    }
    return t;
}

std::map<std::uint32_t, std::size_t> index_by_id(const QuantizedSketch& q) {
    std::map<std::uint32_t, std::size_t> m;
    for (std::size_t i = 0; i < q.primitives.size(); ++i) {
        m[q.primitives[i].id.index] = i;
    }
    return m;
}

double mean(const std::vector<EvalItem>& items, double EvalItem::*field) {
    if (items.empty()) {
        return 0.0;
    }
    double s = 0.0;
    for (const auto& it : items) {
        s += it.*field;
    }
    return s / static_cast<double>(items.size());
}

} // namespace

std::vector<int> solve_assignment(const CostMatrix& cost) {
    const int rows = static_cast<int>(cost.size());
    const int cols = rows == 0 ? 0 : static_cast<int>(cost[0].size());
    if (rows == 0 || cols == 0) {
        return std::vector<int>(static_cast<std::size_t>(rows), -1);
    }
    const int n = std::max(rows, cols);
    // Zero-cost padding; padded rows come last and padded columns sort after
    // real ones, so the lexicographic rule only prefers real columns.
    CostMatrix sq(n, std::vector<std::int64_t>(n, 0));
    for (int i = 0; i < rows; ++i) {
        if (static_cast<int>(cost[i].size()) != cols) {
            throw Error(ErrorCode::SizeMismatch, "cost matrix rows differ in length");
        }
        std::copy(cost[i].begin(), cost[i].end(), sq[i].begin());
    }
    const std::vector<int> full = lexicographic_optimum(sq, hungarian(sq));
    std::vector<int> out(rows);
    for (int i = 0; i < rows; ++i) {
        out[i] = full[i] < cols ? full[i] : -1;
    }
    return out;
}

std::int64_t match_cost(const QuantizedPrimitive& gt, const QuantizedPrimitive& pred, int bins) {
    if (gt.type != pred.type) {
        return kTypeMismatchCost;
    }
    const auto kinds = token_kinds(gt.type);
    const auto a = oriented_tokens(gt);
    const auto b = oriented_tokens(pred);
    std::int64_t c = 0;
    for (std::size_t k = 0; k < kinds.size(); ++k) {
        c += token_distance(kinds[k], a[k], b[k], bins);
    }
    return c;
}

bool primitive_matches(const QuantizedPrimitive& gt, const QuantizedPrimitive& pred, int bins) {
    if (gt.type != pred.type) {
        return false;
    }
    const auto kinds = token_kinds(gt.type);
    const auto a = oriented_tokens(gt);
    const auto b = oriented_tokens(pred);
    for (std::size_t k = 0; k < kinds.size(); ++k) {
        if (token_distance(kinds[k], a[k], b[k], bins) > kParameterTolerance) {
            return false;
        }
    }
    return true;
}

Matching match_primitives(const QuantizedSketch& gt, const QuantizedSketch& pred) {
    Matching m;
    CostMatrix cost(gt.primitives.size(), std::vector<std::int64_t>(pred.primitives.size()));
    for (std::size_t i = 0; i < gt.primitives.size(); ++i) {
        for (std::size_t j = 0; j < pred.primitives.size(); ++j) {
            cost[i][j] = match_cost(gt.primitives[i], pred.primitives[j], gt.bins);
        }
    }
    const std::vector<int> assign = solve_assignment(cost);
    std::vector<bool> pred_used(pred.primitives.size(), false);
    for (std::size_t i = 0; i < assign.size(); ++i) {
        if (assign[i] < 0) {
            m.unmatched_gt.push_back(gt.primitives[i].id);
            continue;
        }
        const auto j = static_cast<std::size_t>(assign[i]);
        pred_used[j] = true;
        m.pairs.emplace_back(gt.primitives[i].id, pred.primitives[j].id);
        m.total_cost += cost[i][j];
    }
    for (std::size_t j = 0; j < pred.primitives.size(); ++j) {
        if (!pred_used[j]) {
            m.unmatched_pred.push_back(pred.primitives[j].id);
        }
    }
    return m;
}

Matching match_primitives(const SketchGraph& gt, const SketchGraph& pred) {
    if (gt.empty()) {
        Matching m;
        for (const auto& e : pred.primitives()) {
            m.unmatched_pred.push_back(e.id);
        }
        return m;
    }
    const Normalization n = Normalization::fit(gt);
    return match_primitives(quantize(gt, n), pred.empty() ? QuantizedSketch{} : quantize(pred, n));
}

double F1Counts::precision() const {
    return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / (tp + fp);
}

double F1Counts::recall() const {
    return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / (tp + fn);
}

double F1Counts::f1() const {
    const double p = precision();
    const double r = recall();
    return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

F1Counts& F1Counts::operator+=(const F1Counts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
}

SketchScore score_sketch(const SketchGraph& gt, const SketchGraph& pred) {
    SketchScore s;
    if (gt.empty()) {
        s.primitives.fp = static_cast<int>(pred.size());
        s.constraints.fp = static_cast<int>(pred.constraints().size());
        s.matching = match_primitives(gt, pred);
        return s;
    }
    const Normalization n = Normalization::fit(gt);
    const QuantizedSketch qg = quantize(gt, n);
    const QuantizedSketch qp = pred.empty() ? QuantizedSketch{} : quantize(pred, n);
    s.matching = match_primitives(qg, qp);
    const auto gi = index_by_id(qg);
    const auto pi = index_by_id(qp);

    std::map<std::uint32_t, std::uint32_t> pred_to_gt;
    std::map<std::uint32_t, bool> gt_tp;
    for (const auto& [g, p] : s.matching.pairs) {
        pred_to_gt[p.index] = g.index;
        const auto& qgp = qg.primitives[gi.at(g.index)];
        const auto& qpp = qp.primitives[pi.at(p.index)];
        const bool ok = primitive_matches(qgp, qpp, qg.bins);
        gt_tp[g.index] = ok;
        s.primitives.tp += ok;
        if (qgp.type == qpp.type) {
            const auto kinds = token_kinds(qgp.type);
            const auto a = oriented_tokens(qgp);
            const auto b = oriented_tokens(qpp);
            for (std::size_t k = 0; k < kinds.size(); ++k) {
                s.tokens_correct += a[k] == b[k];
            }
        }
    }
    for (const auto& q : qg.primitives) {
        s.tokens_total += static_cast<int>(q.tokens.size());
    }
    s.primitives.fp = static_cast<int>(qp.primitives.size()) - s.primitives.tp;
    s.primitives.fn = static_cast<int>(qg.primitives.size()) - s.primitives.tp;

    std::vector<bool> gt_used(gt.constraints().size(), false);
    for (const auto& c : pred.constraints()) {
        auto map_ref = [&](Ref r) -> std::optional<Ref> {
            auto it = pred_to_gt.find(r.id.index);
            if (it == pred_to_gt.end()) {
                return std::nullopt;
            }
            return Ref{PrimitiveId{it->second}, r.sub};
        };
        const auto a = map_ref(c.first);
        const auto b = map_ref(c.second);
        bool hit = false;
        if (a && b && gt_tp[a->id.index] && gt_tp[b->id.index]) {
            const Constraint mapped{c.kind, *a, *b};
            for (std::size_t k = 0; k < gt.constraints().size(); ++k) {
                if (!gt_used[k] && same_constraint(gt.constraints()[k], mapped)) {
                    gt_used[k] = true;
                    hit = true;
                    break;
                }
            }
        }
        s.constraints.tp += hit;
    }
    s.constraints.fp = static_cast<int>(pred.constraints().size()) - s.constraints.tp;
    s.constraints.fn = static_cast<int>(gt.constraints().size()) - s.constraints.tp;
    s.pf1 = s.primitives.f1();
    s.cf1 = s.constraints.f1();
    s.acc = s.tokens_total == 0 ? 0.0 : static_cast<double>(s.tokens_correct) / s.tokens_total;
    return s;
}

double pf1(const SketchGraph& gt, const SketchGraph& pred) {
    return score_sketch(gt, pred).pf1;
}

double cf1(const SketchGraph& gt, const SketchGraph& pred) {
    return score_sketch(gt, pred).cf1;
}

double accuracy(const SketchGraph& gt, const SketchGraph& pred) {
    return score_sketch(gt, pred).acc;
}

std::vector<double> squared_distance_transform(const RasterImage& mask) {
    const int w = mask.width;
    const int h = mask.height;
    if (mask.count() == 0) {
        throw Error(ErrorCode::EmptyMask, "mask has no foreground pixel");
    }
    constexpr double far = 1e20;
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> d(static_cast<std::size_t>(w) * h);
    for (std::size_t k = 0; k < d.size(); ++k) {
        d[k] = mask.pixels[k] ? 0.0 : far;
    }
    const int n = std::max(w, h);
    std::vector<double> f(n);
    std::vector<double> out(n);
    std::vector<int> v(n);
    std::vector<double> z(n + 1);
    // Lower envelope of parabolas rooted at (q, f(q)).
    auto pass = [&](int len) {
        int k = 0;
        v[0] = 0;
        z[0] = -inf;
        z[1] = inf;
        for (int q = 1; q < len; ++q) {
            int p = v[k];
            double s = ((f[q] + static_cast<double>(q) * q) - (f[p] + static_cast<double>(p) * p)) / (2.0 * (q - p));
            while (s <= z[k]) {
                --k;
                p = v[k];
                s = ((f[q] + static_cast<double>(q) * q) - (f[p] + static_cast<double>(p) * p)) / (2.0 * (q - p));
            }
            ++k;
            v[k] = q;
            z[k] = s;
            z[k + 1] = inf;
        }
        k = 0;
        for (int q = 0; q < len; ++q) {
            while (z[k + 1] < q) {
                ++k;
            }
            const double dq = q - v[k];
            out[q] = dq * dq + f[v[k]];
        }
    };
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) {
            f[y] = d[static_cast<std::size_t>(y) * w + x];
        }
        pass(h);
        for (int y = 0; y < h; ++y) {
            d[static_cast<std::size_t>(y) * w + x] = out[y];
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            f[x] = d[static_cast<std::size_t>(y) * w + x];
        }
        pass(w);
        for (int x = 0; x < w; ++x) {
            d[static_cast<std::size_t>(y) * w + x] = out[x];
        }
    }
    return d;
}

double chamfer(const RasterImage& a, const RasterImage& b) {
    if (a.width != b.width || a.height != b.height) {
        throw Error(ErrorCode::SizeMismatch, "chamfer needs images of equal size");
    }
    const std::vector<double> da = squared_distance_transform(a);
    const std::vector<double> db = squared_distance_transform(b);
    double sum_a = 0.0;
    double sum_b = 0.0;
    std::size_t na = 0;
    std::size_t nb = 0;
    for (std::size_t k = 0; k < a.pixels.size(); ++k) {
        if (a.pixels[k]) {
            sum_a += db[k];
            ++na;
        }
        if (b.pixels[k]) {
            sum_b += da[k];
            ++nb;
        }
    }
    return sum_b / (2.0 * nb) + sum_a / (2.0 * na);
}

int EvalReport::failed() const {
    return static_cast<int>(std::count_if(items.begin(), items.end(), [](const EvalItem& i) { return !i.error.empty(); }));
}

nlohmann::ordered_json EvalReport::to_json() const {
    auto counts = [](const F1Counts& c) {
        return nlohmann::ordered_json{{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}};
    };
    nlohmann::ordered_json j;
    j["task"] = task;
    j["items"] = items.size();
    j["failed"] = failed();
    if (task == "autoconstrain") {
        j["pf1"] = pf1;
        j["cf1"] = cf1;
        j["primitive_counts"] = counts(primitive_counts);
        j["constraint_counts"] = counts(constraint_counts);
    } else {
        j["acc"] = acc;
        j["cd"] = cd;
        j["cd_normalized"] = cd_normalized;
        j["image_size"] = image_size;
    }
    j["breakdown"] = nlohmann::ordered_json::array();
    for (const auto& it : items) {
        nlohmann::ordered_json row;
        row["name"] = it.name;
        if (task == "autoconstrain") {
            row["pf1"] = it.pf1;
            row["cf1"] = it.cf1;
            row["skipped_constraints"] = it.skipped_constraints;
        } else {
            row["acc"] = it.acc;
            row["cd"] = it.cd;
        }
        if (!it.error.empty()) {
            row["error"] = it.error;
        }
        j["breakdown"].push_back(std::move(row));
    }
    return j;
}

std::string EvalReport::to_table() const {
    std::ostringstream os;
    const bool ac = task == "autoconstrain";
    os << "task: " << task << "  items: " << items.size() << "  failed: " << failed() << "\n";
    if (ac) {
        os << "PF1 " << format_number(pf1, 4) << "  CF1 " << format_number(cf1, 4) << "\n";
    } else {
        os << "Acc " << format_number(acc, 4) << "  CD " << format_number(cd, 4) << " px^2  (normalized "
           << format_number(cd_normalized, 8) << ")\n";
    }
    os << "\n";
    for (const auto& it : items) {
        os << "  " << it.name;
        if (ac) {
            os << "  pf1=" << format_number(it.pf1, 4) << "  cf1=" << format_number(it.cf1, 4);
        } else {
            os << "  acc=" << format_number(it.acc, 4) << "  cd=" << format_number(it.cd, 4);
        }
        if (!it.error.empty()) {
            os << "  error: " << it.error;
        }
        os << "\n";
    }
    return os.str();
}

EvalReport run_autoconstrain_eval(const std::vector<AutoconstrainItem>& items) {
    EvalReport report;
    report.task = "autoconstrain";
    for (const auto& item : items) {
        EvalItem row;
        row.name = item.name;
        try {
            SketchGraph bare = item.gt;
            bare.clear_constraints();
            const SketchGraph reference = solve(item.gt).solved;
            for (const auto& c : item.predicted) {
                try {
                    bare.add_constraint(c);
                } catch (const Error&) {
                    ++row.skipped_constraints;
                }
            }
            const SketchGraph predicted = bare.constraints().empty() ? bare : solve(bare).solved;
            const SketchScore s = score_sketch(reference, predicted);
            row.pf1 = s.pf1;
            row.cf1 = s.cf1;
            report.primitive_counts += s.primitives;
            report.constraint_counts += s.constraints;
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        report.items.push_back(std::move(row));
    }
    report.pf1 = mean(report.items, &EvalItem::pf1);
    report.cf1 = mean(report.items, &EvalItem::cf1);
    return report;
}

EvalReport run_param_eval(const std::vector<ParamItem>& items, int image_size) {
    EvalReport report;
    report.task = "param";
    report.image_size = image_size;
    std::size_t rendered = 0;
    for (const auto& item : items) {
        EvalItem row;
        row.name = item.name;
        try {
            const SketchGraph gt = item.gt.constraints().empty() ? item.gt : solve(item.gt).solved;
            const SketchGraph pred =
                item.predicted.constraints().empty() ? item.predicted : solve(item.predicted).solved;
            row.acc = score_sketch(gt, pred).acc;
            const PixelFrame frame = fit_frame(gt, image_size, image_size);
            if (pred.empty()) {
                throw Error(ErrorCode::EmptyMask, "prediction has no primitives");
            }
            row.cd = chamfer(render_sketch(gt, frame).mask, render_sketch(pred, frame).mask);
            report.cd += row.cd;
            ++rendered;
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        report.items.push_back(std::move(row));
    }
    report.acc = mean(report.items, &EvalItem::acc);
    report.cd = rendered == 0 ? 0.0 : report.cd / static_cast<double>(rendered);
    report.cd_normalized = report.cd / (static_cast<double>(image_size) * image_size);
    return report;
}

std::vector<BenchmarkPair> load_benchmark(const std::filesystem::path& gt_dir, const std::filesystem::path& pred_dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(gt_dir)) {
        throw Error(ErrorCode::Io, "not a directory: " + gt_dir.string());
    }
    const std::string suffix = ".sketch.json";
    std::vector<std::string> names;
    if (fs::exists(gt_dir / "manifest.json")) {
        nlohmann::json m;
        try {
            m = nlohmann::json::parse(read_text_file(gt_dir / "manifest.json"));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::SyntaxError, std::string("manifest.json: ") + e.what());
        }
        if (!m.is_object() || !m.contains("items") || !m["items"].is_array()) {
            throw Error(ErrorCode::SchemaError, "manifest.json needs an 'items' array");
        }
        for (const auto& n : m["items"]) {
            if (!n.is_string()) {
                throw Error(ErrorCode::SchemaError, "manifest items must be names");
            }
            names.push_back(n.get<std::string>());
        }
    } else {
        for (const auto& e : fs::directory_iterator(gt_dir)) {
            const std::string f = e.path().filename().string();
            if (f.size() > suffix.size() && f.ends_with(suffix)) {
                names.push_back(f.substr(0, f.size() - suffix.size()));
            }
        }
        std::sort(names.begin(), names.end());
    }
    std::vector<BenchmarkPair> out;
    for (const auto& name : names) {
        BenchmarkPair p;
        p.name = name;
        p.gt = load_sketch(gt_dir / (name + suffix));
        try {
            p.predicted = load_sketch(pred_dir / (name + suffix));
        } catch (const Error& e) {
            p.error = e.what();
        }
        out.push_back(std::move(p));
    }
    return out;
}

EvalReport run_autoconstrain_eval(const std::vector<BenchmarkPair>& pairs) {
    std::vector<AutoconstrainItem> items;
    for (const auto& p : pairs) {
        items.push_back({p.name, p.gt, p.predicted ? p.predicted->constraints() : std::vector<Constraint>{}});
    }
    EvalReport r = run_autoconstrain_eval(items);
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        if (!pairs[k].predicted) {
            r.items[k].error = pairs[k].error;
        }
    }
    return r;
}

EvalReport run_param_eval(const std::vector<BenchmarkPair>& pairs, int image_size) {
    std::vector<ParamItem> items;
    for (const auto& p : pairs) {
        items.push_back({p.name, p.gt, p.predicted.value_or(SketchGraph{})});
    }
    EvalReport r = run_param_eval(items, image_size);
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        if (!pairs[k].predicted) {
            r.items[k].error = pairs[k].error;
        }
    }
    return r;
}

nlohmann::ordered_json QAReport::to_json() const {
    return {{"accuracy", accuracy}, {"total", total}, {"correct", correct}, {"unanswered", unanswered}};
}

QAItem qa_item_from_json(const nlohmann::json& j) {
    if (!j.is_object()) {
        throw Error(ErrorCode::SchemaError, "QA item must be an object");
    }
    QAItem item;
    if (!j.contains("question") || !j["question"].is_string()) {
        throw Error(ErrorCode::SchemaError, "QA item needs a 'question' string");
    }
    item.question = j["question"].get<std::string>();
    if (!j.contains("options") || !j["options"].is_array() || j["options"].size() != 4) {
        throw Error(ErrorCode::SchemaError, "QA item needs exactly 4 'options'");
    }
    for (const auto& o : j["options"]) {
        item.options.push_back(o.is_string() ? o.get<std::string>() : o.dump());
    }
    if (!j.contains("gold")) {
        throw Error(ErrorCode::SchemaError, "QA item needs 'gold'");
    }
    const auto& g = j["gold"];
    if (g.is_number_integer()) {
        item.gold = g.get<int>();
    } else if (g.is_array() && g.size() == 4) {
        int ones = 0;
        for (int k = 0; k < 4; ++k) {
            if (!g[k].is_number()) {
                throw Error(ErrorCode::SchemaError, "one-hot gold must be numeric");
            }
            if (g[k].get<double>() == 1.0) {
                item.gold = k;
                ++ones;
            } else if (g[k].get<double>() != 0.0) {
                throw Error(ErrorCode::SchemaError, "one-hot gold entries must be 0 or 1");
            }
        }
        if (ones != 1) {
            throw Error(ErrorCode::SchemaError, "gold must mark exactly one option");
        }
    } else {
        throw Error(ErrorCode::SchemaError, "gold must be an index or a one-hot list of 4");
    }
    if (item.gold < 0 || item.gold > 3) {
        throw Error(ErrorCode::SchemaError, "gold index out of range");
    }
    if (j.contains("predicted") && !j["predicted"].is_null()) {
        if (!j["predicted"].is_number_integer()) {
            throw Error(ErrorCode::SchemaError, "predicted must be an option index");
        }
        item.predicted = j["predicted"].get<int>();
    }
    return item;
}

std::vector<QAItem> parse_qa_jsonl(const std::string& text) {
    std::vector<QAItem> items;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            items.push_back(qa_item_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::SyntaxError, "line " + std::to_string(lineno) + ": " + e.what());
        } catch (const Error& e) {
            throw Error(e.code(), "line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return items;
}

QAReport score_qa(const std::vector<QAItem>& items) {
    QAReport r;
    r.total = static_cast<int>(items.size());
    for (std::size_t k = 0; k < items.size(); ++k) {
        if (!items[k].predicted) {
            r.unanswered.push_back(static_cast<int>(k));
        } else if (*items[k].predicted == items[k].gold) {
            ++r.correct;
        }
    }
    r.accuracy = r.total == 0 ? 0.0 : static_cast<double>(r.correct) / r.total;
    return r;
}

} // namespace cadkit
