#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "peft/adapter_io.hpp"
#include "peft/config_json.hpp"
#include "peft/errors.hpp"
#include "peft/metrics.hpp"
#include "peft/model.hpp"
#include "peft/quantize.hpp"
#include "peft/tensor_io.hpp"
#include "peft/trainer.hpp"

namespace {

/// Exit codes: 0 success, 2 data-format, 64 usage, 65 data-content,
/// 66 missing file.
constexpr int kExitFormat = 2;
constexpr int kExitUsage = 64;
constexpr int kExitData = 65;
constexpr int kExitIo = 66;

/// A flag combination the grammar allows but the command rejects.
class UsageError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Inputs that parse but whose content cannot be evaluated: id sets that do
/// not join, duplicate ids, references on which a metric is undefined.
class DataContentError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

void emit(const nlohmann::json& j) { std::cout << j.dump(2) << "\n"; }

// --------------------------------------------------------------------------
// quantize / dequantize

int cmd_quantize(const std::string& in, const std::string& out, const std::string& codec,
                 const std::string& mode, bool mode_given, std::size_t block,
                 bool double_quant, std::size_t super_block) {
    const peft::Matrix w = peft::load_matrix(in);
    peft::QuantizedTensor qt;
    if (codec == "nf4") {
        if (mode_given) {
            throw UsageError("--mode applies only to the affine codecs (int8, int4); "
                             "nf4 fixes its own codebook");
        }
        qt = peft::quantize_nf4(w, block, double_quant, super_block);
    } else {
        const int bits = codec == "int8" ? 8 : 4;
        const peft::QuantMode m =
            mode == "asym" ? peft::QuantMode::asymmetric : peft::QuantMode::symmetric;
        qt = peft::quantize_blockwise_affine(w, bits, m, block, double_quant, super_block);
    }
    peft::save_quantized(out, qt);

    const peft::StorageReport sr = peft::storage_report(qt);
    emit({{"codec", codec},
          {"rows", qt.rows},
          {"cols", qt.cols},
          {"block_size", qt.block_size},
          {"double_quant", qt.double_quant},
          {"code_bytes", sr.code_bytes},
          {"constant_bytes", sr.constant_bytes},
          {"header_bytes", sr.header_bytes},
          {"total_bytes", sr.total_bytes},
          {"dense_bytes", qt.elements() * sizeof(float)},
          {"compression_ratio", sr.compression_ratio}});
    return 0;
}

int cmd_dequantize(const std::string& in, const std::string& out) {
    const peft::QuantizedTensor qt = peft::load_quantized(in);
    const peft::Matrix w = peft::dequantize(qt);
    peft::save_matrix(out, w);
    emit({{"rows", w.rows()}, {"cols", w.cols()}});
    return 0;
}

// --------------------------------------------------------------------------
// train / audit-grads / report

nlohmann::json report_to_json(const peft::TrainReport& report) {
    return {{"final_loss", report.final_loss},
            {"val_loss", report.val_loss},
            {"loss_curve", report.loss_curve},
            {"trainable_params", report.trainable_params},
            {"total_params", report.total_params},
            {"compression_ratio", report.compression_ratio},
            {"ms_per_step", report.ms_per_step}};
}

void write_checkpoints(const peft::RunConfig& cfg, const peft::AdapterizedModel& model,
                       const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw peft::IoError("cannot create checkpoint directory " + dir.string() + ": " +
                            ec.message());
    }
    const std::pair<const char*, const peft::ProjectionLayer*> layers[] = {
        {"q", &model.proj_q}, {"k", &model.proj_k}, {"v", &model.proj_v}};
    for (const auto& [name, layer] : layers) {
        if (std::holds_alternative<peft::LoraAdapter>(layer->adapter)) {
            peft::save_adapter((dir / ("adapter_" + std::string(name) + ".pfta")).string(),
                               std::get<peft::LoraAdapter>(layer->adapter));
        } else if (std::holds_alternative<peft::AdaLoraAdapter>(layer->adapter)) {
            peft::save_adapter((dir / ("adapter_" + std::string(name) + ".pfta")).string(),
                               std::get<peft::AdaLoraAdapter>(layer->adapter));
        }
        if (layer->w_q.has_value()) {
            peft::save_quantized(dir / ("base_" + std::string(name) + ".pftq"),
                                 *layer->w_q);
        }
    }
    if (cfg.train_head) {
        peft::save_matrix(dir / "head.pft1", model.head);
    }
}

int cmd_train(const std::string& config_path, const std::string& out_path,
              const std::string& checkpoint_dir) {
    const peft::RunConfig cfg = peft::load_run_config(config_path);
    const peft::TrainResult result = peft::train(cfg);
    const nlohmann::json j = report_to_json(result.report);
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        if (!out) {
            throw peft::IoError("cannot open for writing: " + out_path);
        }
        out << j.dump(2) << "\n";
    }
    if (!checkpoint_dir.empty()) {
        write_checkpoints(cfg, result.model, checkpoint_dir);
    }
    std::cerr << "train: " << cfg.steps << " steps, final loss " << result.report.final_loss
              << ", validation loss " << result.report.val_loss << "\n";
    emit(j);
    return 0;
}

int cmd_audit(const std::string& config_path, double epsilon, std::size_t warm_steps) {
    const peft::RunConfig cfg = peft::load_run_config(config_path);
    const peft::AuditReport report = peft::finite_difference_audit(cfg, epsilon, warm_steps);
    emit({{"epsilon", report.epsilon},
          {"max_rel_error", report.max_rel_error},
          {"params_checked", report.params_checked}});
    return 0;
}

int cmd_report(const std::string& config_path) {
    const peft::RunConfig cfg = peft::load_run_config(config_path);
    const peft::CompressionReport report = peft::compression_report(cfg);

    nlohmann::json rows = nlohmann::json::array();
    for (const peft::CompressionRow& row : report.rows) {
        rows.push_back({{"tensor", row.tensor},
                        {"precision", row.precision},
                        {"dense_bytes", row.dense_bytes},
                        {"stored_bytes", row.stored_bytes},
                        {"ratio", row.ratio}});
    }

    char line[160];
    std::snprintf(line, sizeof(line), "%-10s %-9s %12s %12s %8s", "tensor", "precision",
                  "dense", "stored", "ratio");
    std::cerr << line << "\n";
    for (const peft::CompressionRow& row : report.rows) {
        std::snprintf(line, sizeof(line), "%-10s %-9s %12zu %12zu %8.3f",
                      row.tensor.c_str(), row.precision.c_str(), row.dense_bytes,
                      row.stored_bytes, row.ratio);
        std::cerr << line << "\n";
    }
    std::snprintf(line, sizeof(line), "%-10s %-9s %12zu %12zu %8.3f", "total", "-",
                  report.frozen_dense_bytes, report.frozen_stored_bytes, report.ratio);
    std::cerr << line << "\n";
    std::cerr << "trainable params: " << report.trainable_params
              << " / total: " << report.total_params << "\n";

    emit({{"rows", rows},
          {"ratio", report.ratio},
          {"trainable_params", report.trainable_params},
          {"total_params", report.total_params}});
    return 0;
}

// --------------------------------------------------------------------------
// eval-rouge / eval-wer

/// One JSON object per line with string fields "id" and "text"; a repeated id
/// accumulates several texts (multi-reference).
std::map<std::string, std::vector<std::string>> load_jsonl(const std::string& path) {
    auto in = peft::io::open_input(path);
    std::map<std::string, std::vector<std::string>> entries;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw peft::FormatError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (!j.is_object() || !j.contains("id") || !j.at("id").is_string() ||
            !j.contains("text") || !j.at("text").is_string()) {
            throw peft::FormatError(path + ":" + std::to_string(lineno) +
                                    ": each line needs string fields \"id\" and \"text\"");
        }
        entries[j.at("id").get<std::string>()].push_back(j.at("text").get<std::string>());
    }
    return entries;
}

std::string join_ids(const std::vector<std::string>& ids) {
    std::string s;
    for (const std::string& id : ids) {
        if (!s.empty()) {
            s += ", ";
        }
        s += id;
    }
    return s;
}

void check_join(const std::map<std::string, std::vector<std::string>>& candidates,
                const std::map<std::string, std::vector<std::string>>& references) {
    std::vector<std::string> missing_refs;
    std::vector<std::string> missing_cands;
    for (const auto& [id, texts] : candidates) {
        if (texts.size() > 1) {
            throw DataContentError("duplicate candidate id " + id);
        }
        if (references.find(id) == references.end()) {
            missing_refs.push_back(id);
        }
    }
    for (const auto& [id, texts] : references) {
        if (candidates.find(id) == candidates.end()) {
            missing_cands.push_back(id);
        }
    }
    if (!missing_refs.empty() || !missing_cands.empty()) {
        std::string msg = "id sets do not join;";
        if (!missing_refs.empty()) {
            msg += " ids missing from references: " + join_ids(missing_refs) + ";";
        }
        if (!missing_cands.empty()) {
            msg += " ids missing from candidates: " + join_ids(missing_cands) + ";";
        }
        msg.pop_back();
        throw DataContentError(msg);
    }
    if (candidates.empty()) {
        throw DataContentError("no examples to score");
    }
}

/// Multi-reference rule: rouge1/rouge2 use the metric's own clipped mean over
/// references; rougeL, rougeS and wer average the single-reference score over
/// the references on which it is defined.
nlohmann::json score_id(const std::string& metric, const peft::Tokens& cand,
                        const std::vector<peft::Tokens>& refs) {
    if (metric == "rouge1" || metric == "rouge2") {
        return {{"score", peft::rouge_n(cand, refs, metric == "rouge1" ? 1 : 2)}};
    }
    if (metric == "rougeL" || metric == "rougeS") {
        double sum = 0.0;
        std::size_t defined = 0;
        for (const peft::Tokens& ref : refs) {
            if (metric == "rougeL" ? ref.empty() : ref.size() < 2) {
                continue;
            }
            sum += metric == "rougeL" ? peft::rouge_l(cand, ref) : peft::rouge_s(cand, ref);
            ++defined;
        }
        if (defined == 0) {
            throw peft::UndefinedMetricError(metric + ": every reference is too short");
        }
        return {{"score", sum / static_cast<double>(defined)}};
    }
    double score = 0.0, subs = 0.0, dels = 0.0, ins = 0.0, matches = 0.0;
    std::size_t defined = 0;
    for (const peft::Tokens& ref : refs) {
        if (ref.empty()) {
            continue;
        }
        const peft::WerBreakdown b = peft::wer(ref, cand);
        score += b.wer;
        subs += static_cast<double>(b.substitutions);
        dels += static_cast<double>(b.deletions);
        ins += static_cast<double>(b.insertions);
        matches += static_cast<double>(b.matches);
        ++defined;
    }
    if (defined == 0) {
        throw peft::UndefinedMetricError("wer: every reference is empty");
    }
    const double n = static_cast<double>(defined);
    return {{"score", score / n},
            {"substitutions", subs / n},
            {"deletions", dels / n},
            {"insertions", ins / n},
            {"matches", matches / n}};
}

int cmd_eval(const std::string& cand_path, const std::string& ref_path,
             const std::string& metric) {
    const auto candidates = load_jsonl(cand_path);
    const auto references = load_jsonl(ref_path);
    check_join(candidates, references);

    nlohmann::json per_id = nlohmann::json::array();
    double sum = 0.0;
    for (const auto& [id, texts] : candidates) {
        const peft::Tokens cand = peft::tokenize(texts[0]);
        std::vector<peft::Tokens> refs;
        for (const std::string& text : references.at(id)) {
            refs.push_back(peft::tokenize(text));
        }
        nlohmann::json entry;
        try {
            entry = score_id(metric, cand, refs);
        } catch (const peft::UndefinedMetricError& e) {
            throw DataContentError("undefined metric for id " + id + ": " + e.what());
        }
        entry["id"] = id;
        sum += entry.at("score").get<double>();
        per_id.push_back(entry);
    }
    emit({{"metric", metric},
          {"per_id", per_id},
          {"mean", sum / static_cast<double>(per_id.size())}});
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Quantization and low-rank adapter toolkit"};
    app.require_subcommand(1);

    // quantize
    auto* quantize = app.add_subcommand("quantize", "Quantize a PFT1 tensor to a PFTQ file");
    std::string q_in, q_out, q_codec;
    std::string q_mode = "sym";
    std::size_t q_block = 64, q_super = 256;
    bool q_dq = false;
    quantize->add_option("--in", q_in, "input tensor (PFT1)")->required();
    quantize->add_option("--out", q_out, "output tensor (PFTQ)")->required();
    quantize->add_option("--codec", q_codec, "codec")
        ->required()
        ->check(CLI::IsMember({"int8", "int4", "nf4"}));
    auto* mode_opt = quantize->add_option("--mode", q_mode, "affine range mapping")
                         ->check(CLI::IsMember({"sym", "asym"}));
    quantize->add_option("--block", q_block, "block size (elements)");
    quantize->add_flag("--double-quant", q_dq, "8-bit quantize the per-block scales");
    quantize->add_option("--super-block", q_super, "blocks per double-quant scale group");

    // dequantize
    auto* dequantize = app.add_subcommand("dequantize", "Expand a PFTQ file back to PFT1");
    std::string d_in, d_out;
    dequantize->add_option("--in", d_in, "input tensor (PFTQ)")->required();
    dequantize->add_option("--out", d_out, "output tensor (PFT1)")->required();

    // train
    auto* train = app.add_subcommand("train", "Run the attention fine-tuning loop");
    std::string t_config, t_out, t_ckpt;
    train->add_option("--config", t_config, "run configuration (JSON)")->required();
    train->add_option("--out", t_out, "write the report JSON here as well");
    train->add_option("--checkpoint", t_ckpt, "directory for adapter/base checkpoints");

    // audit-grads
    auto* audit = app.add_subcommand("audit-grads",
                                     "Compare analytic gradients against central differences");
    std::string a_config;
    double a_epsilon = 1e-4;
    std::size_t a_warm = 0;
    audit->add_option("--config", a_config, "run configuration (JSON)")->required();
    audit->add_option("--epsilon", a_epsilon, "finite-difference step");
    audit->add_option("--warm-steps", a_warm, "training steps before the audit");

    // eval-rouge / eval-wer
    auto* eval_rouge = app.add_subcommand("eval-rouge", "Score candidates against references");
    std::string er_cands, er_refs;
    std::string er_metric = "rouge1";
    eval_rouge->add_option("--candidates", er_cands, "candidate corpus (JSONL)")->required();
    eval_rouge->add_option("--references", er_refs, "reference corpus (JSONL)")->required();
    eval_rouge->add_option("--metric", er_metric, "which ROUGE variant")
        ->check(CLI::IsMember({"rouge1", "rouge2", "rougeL", "rougeS"}));

    auto* eval_wer = app.add_subcommand("eval-wer", "Word error rate of candidates");
    std::string ew_cands, ew_refs;
    eval_wer->add_option("--candidates", ew_cands, "candidate corpus (JSONL)")->required();
    eval_wer->add_option("--references", ew_refs, "reference corpus (JSONL)")->required();

    // report
    auto* report = app.add_subcommand("report", "Compression accounting for a configuration");
    std::string r_config;
    report->add_option("--config", r_config, "run configuration (JSON)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            return app.exit(e);
        }
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (*quantize) {
            return cmd_quantize(q_in, q_out, q_codec, q_mode, mode_opt->count() > 0, q_block,
                                q_dq, q_super);
        }
        if (*dequantize) {
            return cmd_dequantize(d_in, d_out);
        }
        if (*train) {
            return cmd_train(t_config, t_out, t_ckpt);
        }
        if (*audit) {
            return cmd_audit(a_config, a_epsilon, a_warm);
        }
        if (*eval_rouge) {
            return cmd_eval(er_cands, er_refs, er_metric);
        }
        if (*eval_wer) {
            return cmd_eval(ew_cands, ew_refs, "wer");
        }
        return cmd_report(r_config);
    } catch (const peft::FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return kExitFormat;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const peft::ConfigError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const peft::ShapeError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const DataContentError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const peft::UndefinedMetricError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const peft::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const peft::TrainingError& e) {
        std::cerr << "training error: " << e.what() << "\n";
        return 1;
    }
}
