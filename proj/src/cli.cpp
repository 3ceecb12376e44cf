#include "cadvlm/cli.hpp"

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "cadvlm/data.hpp"
#include "cadvlm/error.hpp"
#include "cadvlm/inference.hpp"
#include "cadvlm/metrics.hpp"
#include "cadvlm/raster.hpp"
#include "cadvlm/tokens.hpp"
#include "cadvlm/train.hpp"

namespace cadvlm::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Io {
  std::istream& in;
  std::ostream& out;
  std::ostream& err;
};

std::string default_out_dir(const std::string& fallback) {
  const char* env = std::getenv(kOutDirEnv);
  return env && *env ? std::string(env) : fallback;
}

std::vector<Sketch> load(const std::string& path, Io& io) {
  return path == "-" ? read_sketches(io.in, "<stdin>") : read_sketches(path);
}

// Runs body on a file stream or on io.out for "-".
template <typename F>
void with_output(const std::string& path, Io& io, F&& body) {
  if (path == "-" || path.empty()) {
    body(io.out);
    return;
  }
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::Io, "cannot write " + path);
  body(f);
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  std::vector<std::thread> pool;
  for (int j = 0; j < jobs; ++j) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

RenderMode parse_mode(const std::string& name) {
  if (name == "precise") return RenderMode::Precise;
  if (name == "hand") return RenderMode::HandDrawn;
  if (name == "noisy") return RenderMode::NoisyHandDrawn;
  throw CLI::ValidationError("--mode", "expected precise, hand or noisy");
}

const std::vector<std::string> kModeNames = {"precise", "hand", "noisy"};

json report_json(const MatchReport& r) {
  return {{"n_c", r.n_c}, {"n_p", r.n_p}, {"m", r.m}, {"f1", r.f1()}};
}

json scores_json(const Scores& s) {
  return {{"ske_acc", s.ske_acc}, {"ent_acc", s.ent_acc}, {"cad_f1", s.cad_f1}, {"n", s.n}};
}

json flags_json(const std::vector<DecodeFlag>& flags) {
  json j = json::array();
  for (auto f : flags) j.push_back(std::string(flag_name(f)));
  return j;
}

std::string per_file_path(const std::string& out, std::size_t i, std::size_t n, const std::string& ext) {
  if (n == 1 && fs::path(out).extension() == ext) return out;
  std::ostringstream name;
  name << std::setw(5) << std::setfill('0') << i << ext;
  return (fs::path(out) / name.str()).string();
}

void print_scores_table(std::ostream& out, const std::vector<std::pair<std::string, Scores>>& rows) {
  out << std::left << std::setw(10) << "ratio" << std::right << std::setw(10) << "Ske-Acc" << std::setw(10)
      << "Ent-Acc" << std::setw(10) << "CAD-F1" << std::setw(8) << "N" << '\n';
  for (const auto& [label, s] : rows) {
    out << std::left << std::setw(10) << label << std::right << std::fixed << std::setprecision(4) << std::setw(10)
        << s.ske_acc << std::setw(10) << s.ent_acc << std::setw(10) << s.cad_f1 << std::setw(8) << s.n << '\n';
  }
  out.unsetf(std::ios::floatfield);
}

// ---------------------------------------------------------------------------

struct IngestArgs {
  std::string in, out;
};

void cmd_ingest(const IngestArgs& a, bool as_json, Io& io) {
  IngestResult r = a.in == "-" ? ingest(io.in, "<stdin>") : ingest(a.in);
  const std::string dir = a.out.empty() ? default_out_dir(".") : a.out;
  fs::create_directories(dir);
  for (Split s : {Split::Train, Split::Val, Split::Test}) {
    write_sketches((fs::path(dir) / (std::string(split_name(s)) + ".jsonl")).string(), r.get(s).sketches);
  }
  for (const auto& skip : r.skipped) io.err << "skipped line " << skip.line << ": " << skip.reason << '\n';
  if (as_json) {
    json skipped = json::array();
    for (const auto& s : r.skipped) skipped.push_back({{"line", s.line}, {"reason", s.reason}});
    io.out << json{{"train", r.train.size()}, {"val", r.val.size()}, {"test", r.test.size()},
                   {"duplicates", r.duplicates}, {"skipped", skipped}}
                  .dump()
           << '\n';
  } else {
    io.out << "train " << r.train.size() << "\nval   " << r.val.size() << "\ntest  " << r.test.size()
           << "\nduplicates " << r.duplicates << "\nskipped " << r.skipped.size() << '\n';
  }
}

struct SynthArgs {
  int n = 0;
  std::uint64_t seed = 0;
  std::string out = "-";
};

void cmd_synth(const SynthArgs& a, Io& io) {
  const Corpus c = synth_corpus(a.n, a.seed);
  with_output(a.out, io, [&](std::ostream& o) { write_sketches(o, c.sketches); });
}

struct TokenizeArgs {
  std::string in = "-", out = "-", stream = "both";
  bool text = false;
  bool decode = false;
};

void cmd_tokenize(const TokenizeArgs& a, Io& io) {
  if (a.decode) {
    // Token lines back to sketches (primitive stream).
    std::ifstream file;
    if (a.in != "-") {
      file.open(a.in);
      if (!file) throw Error(Errc::Io, "cannot open " + a.in);
    }
    std::istream& src = a.in == "-" ? io.in : file;
    with_output(a.out, io, [&](std::ostream& o) {
      std::string line;
      while (std::getline(src, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        PrimitiveDecode d = decode_primitives(TokenSeq{parse_tokens(line), Stream::Primitive});
        json j = to_json(d.sketch);
        j["flags"] = flags_json(d.flags);
        o << j.dump() << '\n';
      }
    });
    return;
  }
  const auto sketches = load(a.in, io);
  with_output(a.out, io, [&](std::ostream& o) {
    for (const auto& s : sketches) {
      const bool prim = a.stream != "constraint";
      const bool cons = a.stream != "primitive";
      if (a.text) {
        if (prim) o << format_tokens(encode_primitives(s).tokens) << '\n';
        if (cons) o << format_tokens(encode_constraints(s).tokens) << '\n';
      } else {
        json j = json::object();
        if (prim) j["primitives"] = encode_primitives(s).tokens;
        if (cons) j["constraints"] = encode_constraints(s).tokens;
        o << j.dump() << '\n';
      }
    }
  });
}

struct RenderArgs {
  std::string in = "-", out, mode = "precise";
  std::uint64_t seed = 0;
  double sigma = 1.0;
  int jobs = 1;
};

void cmd_render(const RenderArgs& a, Io& io) {
  const auto sketches = load(a.in, io);
  const std::string out = a.out.empty() ? default_out_dir(".") : a.out;
  const RenderMode mode = parse_mode(a.mode);
  if (!(sketches.size() == 1 && fs::path(out).extension() == ".png")) fs::create_directories(out);
  std::vector<std::string> written(sketches.size());
  parallel_for(sketches.size(), a.jobs, [&](std::size_t i) {
    AugmentSpec spec{mode, a.seed + i, a.sigma};
    written[i] = per_file_path(out, i, sketches.size(), ".png");
    write_png(written[i], rasterize(sketches[i], spec));
  });
  for (const auto& w : written) io.out << w << '\n';
}

struct ExportSvgArgs {
  std::string in = "-", out;
  int jobs = 1;
};

void cmd_export_svg(const ExportSvgArgs& a, Io& io) {
  const auto sketches = load(a.in, io);
  if (a.out == "-") {
    for (const auto& s : sketches) io.out << to_svg(s);
    return;
  }
  const std::string out = a.out.empty() ? default_out_dir(".") : a.out;
  if (!(sketches.size() == 1 && fs::path(out).extension() == ".svg")) fs::create_directories(out);
  std::vector<std::string> written(sketches.size());
  parallel_for(sketches.size(), a.jobs, [&](std::size_t i) {
    written[i] = per_file_path(out, i, sketches.size(), ".svg");
    std::ofstream f(written[i]);
    if (!f) throw Error(Errc::Io, "cannot write " + written[i]);
    f << to_svg(sketches[i]);
  });
  for (const auto& w : written) io.out << w << '\n';
}

struct TrainArgs {
  std::string task = "complete", corpus, out, config, variant, render_mode = "precise";
  std::optional<long> steps;
  std::optional<int> epochs, batch;
  std::optional<double> lr, dropout;
  std::optional<std::uint64_t> seed;
  bool fixed_examples = false;
  int checkpoint_every = 1;
  int log_every = 0;
};

void cmd_train(const TrainArgs& a, bool as_json, Io& io) {
  ModelConfig mc;
  TrainOptions opts;
  if (!a.config.empty()) {
    std::ifstream f(a.config);
    if (!f) throw Error(Errc::Io, "cannot open " + a.config);
    json cfg;
    try {
      cfg = json::parse(f);
    } catch (const json::exception& e) {
      throw Error(Errc::ParseError, a.config + ": " + e.what());
    }
    if (cfg.contains("model")) mc = ModelConfig::from_json(cfg["model"]);
    const json t = cfg.value("train", json::object());
    auto& o = opts.optim;
    o.lr0 = t.value("lr0", o.lr0);
    o.batch = t.value("batch", o.batch);
    o.epochs = t.value("epochs", o.epochs);
    o.weight_decay = t.value("weight_decay", o.weight_decay);
    o.beta1 = t.value("beta1", o.beta1);
    o.beta2 = t.value("beta2", o.beta2);
    o.eps = t.value("eps", o.eps);
    o.total_steps = t.value("total_steps", o.total_steps);
    o.seed = t.value("seed", o.seed);
  }
  const auto task = task_from_name(a.task);
  if (!task) throw CLI::ValidationError("--task", "expected complete, constrain or image-cond");
  mc.mode = *task;
  if (!a.variant.empty()) {
    const auto v = variant_from_name(a.variant);
    if (!v) throw CLI::ValidationError("--variant", "unknown variant " + a.variant);
    mc.apply(*v);
  }
  if (a.steps) opts.optim.total_steps = *a.steps;
  if (a.epochs) opts.optim.epochs = *a.epochs;
  if (a.batch) opts.optim.batch = *a.batch;
  if (a.lr) opts.optim.lr0 = *a.lr;
  if (a.dropout) mc.dropout = *a.dropout;
  if (a.seed) {
    opts.optim.seed = *a.seed;
    mc.seed = *a.seed;
  }
  opts.fixed_examples = a.fixed_examples;
  opts.checkpoint_every = a.checkpoint_every;
  opts.sample.render.mode = parse_mode(a.render_mode);
  opts.out_dir = a.out.empty() ? default_out_dir("runs") : a.out;
  if (a.log_every > 0) {
    opts.on_step = [&io, every = a.log_every](const StepLog& l) {
      if (l.step % every == 0) io.err << l.to_json().dump() << '\n';
    };
  }

  const auto sketches = load(a.corpus, io);
  CadVlm model(mc);
  const TrainResult r = train(model, sketches, opts);
  const StepLog& last = r.log.back();
  if (as_json) {
    io.out << json{{"steps", r.steps}, {"epochs", r.epochs}, {"checkpoint", r.last_checkpoint},
                   {"final", last.to_json()}}
                  .dump()
           << '\n';
  } else {
    io.out << "trained " << r.steps << " steps over " << r.epochs << " epochs; final loss " << last.total
           << "\ncheckpoint " << r.last_checkpoint << '\n';
  }
}

struct EvalArgs {
  std::string pred, truth, ckpt, corpus, per_sketch, render_mode = "precise";
  std::vector<double> ratios;
  bool constraints = false;
  std::uint64_t seed = 0;
  int limit = 0;
  int batch = 32;
};

void write_per_sketch(const std::string& path, const std::vector<MatchReport>& reports) {
  std::ofstream f(path);
  if (!f) throw Error(Errc::Io, "cannot write " + path);
  f << "index,n_c,n_p,m,f1\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    f << i << ',' << r.n_c << ',' << r.n_p << ',' << r.m << ',' << r.f1() << '\n';
  }
}

std::vector<MatchReport> evaluate_image_conditioned(const CadVlm& model, std::span<const Sketch> sketches,
                                                    const AugmentSpec& render) {
  std::vector<MatchReport> reports;
  for (const auto& s : sketches) {
    const RasterImage image = rasterize(Sketch{s.entities, {}}, render);
    reports.push_back(entity_match(generate_from_image(model, image).sketch, s));
  }
  return reports;
}

void cmd_eval(const EvalArgs& a, bool as_json, Io& io) {
  std::vector<std::pair<std::string, Scores>> rows;
  std::vector<MatchReport> last;
  if (!a.pred.empty() || !a.truth.empty()) {
    if (a.pred.empty() || a.truth.empty()) throw CLI::ValidationError("eval", "--pred and --truth go together");
    const auto pred = load(a.pred, io);
    const auto truth = load(a.truth, io);
    if (pred.size() != truth.size()) {
      throw Error(Errc::ShapeMismatch, "prediction count " + std::to_string(pred.size()) + " != truth count " +
                                           std::to_string(truth.size()));
    }
    for (std::size_t i = 0; i < pred.size(); ++i) {
      last.push_back(a.constraints ? constraint_match(pred[i].constraints, truth[i].constraints)
                                   : entity_match(pred[i], truth[i]));
    }
    const Scores s = score(tally(last));
    if (!a.per_sketch.empty()) write_per_sketch(a.per_sketch, last);
    if (as_json) {
      io.out << scores_json(s).dump() << '\n';
    } else {
      print_scores_table(io.out, {{"-", s}});
    }
    return;
  }
  if (a.ckpt.empty() || a.corpus.empty()) throw CLI::ValidationError("eval", "need --pred/--truth or --ckpt/--corpus");
  const CadVlm model = load_model(a.ckpt);
  auto sketches = load(a.corpus, io);
  if (a.limit > 0 && static_cast<std::size_t>(a.limit) < sketches.size()) sketches.resize(static_cast<std::size_t>(a.limit));
  const AugmentSpec render{parse_mode(a.render_mode), a.seed, 1.0};
  const Task task = model.config().mode;
  if (task == Task::Autocomplete) {
    std::vector<std::optional<double>> ratios;
    for (double r : a.ratios) {
      if (!(r >= kMinPrefixRatio - 1e-12 && r <= kMaxPrefixRatio + 1e-12)) {
        throw CLI::ValidationError("--ratio", "ratio must lie in [0.2, 0.8]");
      }
      ratios.push_back(r);
    }
    if (ratios.empty()) ratios.push_back(std::nullopt);
    for (const auto& r : ratios) {
      last = evaluate_completion(model, sketches, r, a.seed, render, a.batch);
      std::ostringstream label;
      if (r) {
        label << *r;
      } else {
        label << "sampled";
      }
      rows.push_back({label.str(), score(tally(last))});
    }
  } else if (task == Task::Autoconstrain) {
    last = evaluate_constraints(model, sketches, render, a.batch);
    rows.push_back({"full", score(tally(last))});
  } else {
    last = evaluate_image_conditioned(model, sketches, render);
    rows.push_back({"image", score(tally(last))});
  }
  if (!a.per_sketch.empty()) write_per_sketch(a.per_sketch, last);
  if (as_json) {
    if (rows.size() == 1 && a.ratios.size() <= 1) {
      json j = scores_json(rows[0].second);
      if (!a.ratios.empty()) j["ratio"] = a.ratios[0];
      io.out << j.dump() << '\n';
    } else {
      json arr = json::array();
      for (std::size_t i = 0; i < rows.size(); ++i) {
        json j = scores_json(rows[i].second);
        j["ratio"] = a.ratios[i];
        arr.push_back(j);
      }
      io.out << json{{"task", task_name(task)}, {"ratios", arr}}.dump() << '\n';
    }
  } else {
    print_scores_table(io.out, rows);
  }
}

struct CompleteArgs {
  std::string ckpt, in = "-", out = "-", truth, render_mode = "precise";
  std::optional<double> nucleus;
  int samples = 1;
  std::uint64_t seed = 0;
};

void cmd_complete(const CompleteArgs& a, Io& io) {
  const CadVlm model = load_model(a.ckpt);
  const auto inputs = load(a.in, io);
  std::vector<Sketch> truths;
  if (!a.truth.empty()) {
    truths = load(a.truth, io);
    if (truths.size() != inputs.size()) throw Error(Errc::ShapeMismatch, "--truth must align with --in");
  }
  const AugmentSpec render{parse_mode(a.render_mode), a.seed, 1.0};
  with_output(a.out, io, [&](std::ostream& o) {
    if (model.config().mode == Task::ImageConditioned) {
      for (const auto& s : inputs) {
        PrimitiveDecode d = generate_from_image(model, rasterize(Sketch{s.entities, {}}, render));
        json j = to_json(d.sketch);
        j["flags"] = flags_json(d.flags);
        o << j.dump() << '\n';
      }
      return;
    }
    auto emit = [&](const Completion& c, std::size_t i) {
      json j = to_json(c.sketch);
      j["generated"] = c.generated.size();
      j["flags"] = flags_json(c.flags);
      if (!truths.empty()) {
        j["report"] = report_json(entity_match(c.generated, remaining_entities(truths[i], inputs[i])));
      }
      return j;
    };
    if (a.nucleus) {
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        const auto cands = complete_sampled(model, inputs[i], *a.nucleus, a.seed + i, a.samples, render);
        for (std::size_t k = 0; k < cands.size(); ++k) {
          json j = emit(cands[k], i);
          j["input"] = i;
          j["rank"] = k;
          o << j.dump() << '\n';
        }
      }
    } else {
      const auto done = complete_batch(model, inputs, render);
      for (std::size_t i = 0; i < done.size(); ++i) o << emit(done[i], i).dump() << '\n';
    }
  });
}

struct ConstrainArgs {
  std::string ckpt, in = "-", out = "-", render_mode = "precise";
  std::uint64_t seed = 0;
};

void cmd_constrain(const ConstrainArgs& a, Io& io) {
  const CadVlm model = load_model(a.ckpt);
  const auto inputs = load(a.in, io);
  const AugmentSpec render{parse_mode(a.render_mode), a.seed, 1.0};
  const auto results = autoconstrain_batch(model, inputs, render);
  with_output(a.out, io, [&](std::ostream& o) {
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      Sketch s{inputs[i].entities, results[i].constraints};
      json j = to_json(s);
      j["flags"] = flags_json(results[i].flags);
      o << j.dump() << '\n';
    }
  });
}

}  // namespace

int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  Io io{in, out, err};
  CLI::App app{"Sketch tokenization, rendering, training and generation for CAD vision-language models", "cadvlm"};
  app.require_subcommand(1);
  app.fallthrough();
  bool as_json = false;
  app.add_flag("--json", as_json, "Machine-readable JSON on stdout");

  IngestArgs ingest_a;
  auto* ingest_cmd = app.add_subcommand("ingest", "Validate, deduplicate and split a JSONL corpus");
  ingest_cmd->add_option("--in", ingest_a.in, "Input JSONL")->required();
  ingest_cmd->add_option("--out", ingest_a.out, "Output directory for train/val/test.jsonl");

  SynthArgs synth_a;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic sketch corpus");
  synth_cmd->add_option("--n", synth_a.n, "Number of sketches")->required()->check(CLI::PositiveNumber);
  synth_cmd->add_option("--seed", synth_a.seed, "Generator seed");
  synth_cmd->add_option("--out", synth_a.out, "Output JSONL (- for stdout)");

  TokenizeArgs tok_a;
  auto* tok_cmd = app.add_subcommand("tokenize", "Encode sketches as token streams, or decode token lines");
  tok_cmd->add_option("--in", tok_a.in, "Input JSONL, or token lines with --decode");
  tok_cmd->add_option("--out", tok_a.out, "Output (- for stdout)");
  tok_cmd->add_option("--stream", tok_a.stream, "primitive, constraint or both")
      ->check(CLI::IsMember({"primitive", "constraint", "both"}));
  tok_cmd->add_flag("--text", tok_a.text, "Space-separated token lines instead of JSONL");
  tok_cmd->add_flag("--decode", tok_a.decode, "Decode primitive token lines into sketches");

  RenderArgs render_a;
  auto* render_cmd = app.add_subcommand("render", "Rasterize sketches to PNG");
  render_cmd->add_option("--in", render_a.in, "Input JSONL");
  render_cmd->add_option("--out", render_a.out, "Output .png (single sketch) or directory");
  render_cmd->add_option("--mode", render_a.mode, "precise, hand or noisy")->check(CLI::IsMember(kModeNames));
  render_cmd->add_option("--seed", render_a.seed, "Augmentation seed (sketch i uses seed + i)");
  render_cmd->add_option("--sigma", render_a.sigma, "Hand-drawn jitter in token units");
  render_cmd->add_option("--jobs", render_a.jobs, "Parallel workers")->check(CLI::PositiveNumber);

  TrainArgs train_a;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write per-epoch checkpoints");
  train_cmd->add_option("--task", train_a.task, "complete, constrain or image-cond")
      ->check(CLI::IsMember({"complete", "constrain", "image-cond"}));
  train_cmd->add_option("--corpus", train_a.corpus, "Training JSONL")->required();
  train_cmd->add_option("--out", train_a.out, "Run directory");
  train_cmd->add_option("--config", train_a.config, "JSON with \"model\" and \"train\" sections");
  train_cmd->add_option("--variant", train_a.variant, "full, text, no-idl, no-itc or no-idl-itc");
  train_cmd->add_option("--steps", train_a.steps, "Total optimizer steps");
  train_cmd->add_option("--epochs", train_a.epochs, "Epochs when --steps is not given");
  train_cmd->add_option("--batch", train_a.batch, "Batch size");
  train_cmd->add_option("--lr", train_a.lr, "Peak learning rate");
  train_cmd->add_option("--seed", train_a.seed, "Initialization and sampling seed");
  train_cmd->add_option("--dropout", train_a.dropout, "Residual dropout rate (default 0)")->check(CLI::Range(0.0, 0.99));
  train_cmd->add_option("--render-mode", train_a.render_mode, "precise, hand or noisy")
      ->check(CLI::IsMember(kModeNames));
  train_cmd->add_flag("--fixed-examples", train_a.fixed_examples, "Sample each prefix once instead of per epoch");
  train_cmd->add_option("--checkpoint-every", train_a.checkpoint_every, "Epochs between checkpoints");
  train_cmd->add_option("--log-every", train_a.log_every, "Echo every Nth step record to stderr");

  EvalArgs eval_a;
  auto* eval_cmd = app.add_subcommand("eval", "Score predictions, or a checkpoint on a corpus");
  eval_cmd->add_option("--pred", eval_a.pred, "Predicted sketches JSONL");
  eval_cmd->add_option("--truth", eval_a.truth, "Ground-truth sketches JSONL");
  eval_cmd->add_flag("--constraints", eval_a.constraints, "Compare constraints instead of entities");
  eval_cmd->add_option("--ckpt", eval_a.ckpt, "Checkpoint directory");
  eval_cmd->add_option("--corpus", eval_a.corpus, "Evaluation JSONL");
  eval_cmd->add_option("--ratio", eval_a.ratios, "Input entity ratio; repeat for a sweep");
  eval_cmd->add_option("--seed", eval_a.seed, "Prefix sampling seed");
  eval_cmd->add_option("--limit", eval_a.limit, "Evaluate only the first N sketches");
  eval_cmd->add_option("--batch", eval_a.batch, "Decode batch size")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--render-mode", eval_a.render_mode, "precise, hand or noisy")
      ->check(CLI::IsMember(kModeNames));
  eval_cmd->add_option("--per-sketch", eval_a.per_sketch, "Write per-sketch counts as CSV");

  CompleteArgs complete_a;
  auto* complete_cmd = app.add_subcommand("complete", "Complete partial sketches with a checkpoint");
  complete_cmd->add_option("--ckpt", complete_a.ckpt, "Checkpoint directory")->required();
  complete_cmd->add_option("--in", complete_a.in, "Partial sketches JSONL");
  complete_cmd->add_option("--out", complete_a.out, "Output JSONL");
  complete_cmd->add_option("--truth", complete_a.truth, "Full sketches aligned with --in");
  complete_cmd->add_option("--nucleus", complete_a.nucleus, "Nucleus mass p in (0, 1]");
  complete_cmd->add_option("--samples", complete_a.samples, "Completions per input with --nucleus")
      ->check(CLI::PositiveNumber);
  complete_cmd->add_option("--seed", complete_a.seed, "Sampling seed");
  complete_cmd->add_option("--render-mode", complete_a.render_mode, "precise, hand or noisy")
      ->check(CLI::IsMember(kModeNames));

  ConstrainArgs constrain_a;
  auto* constrain_cmd = app.add_subcommand("constrain", "Predict constraints for full sketches");
  constrain_cmd->add_option("--ckpt", constrain_a.ckpt, "Checkpoint directory")->required();
  constrain_cmd->add_option("--in", constrain_a.in, "Sketches JSONL");
  constrain_cmd->add_option("--out", constrain_a.out, "Output JSONL");
  constrain_cmd->add_option("--seed", constrain_a.seed, "Render seed");
  constrain_cmd->add_option("--render-mode", constrain_a.render_mode, "precise, hand or noisy")
      ->check(CLI::IsMember(kModeNames));

  ExportSvgArgs svg_a;
  auto* svg_cmd = app.add_subcommand("export-svg", "Draw sketches as SVG with exact arcs");
  svg_cmd->add_option("--in", svg_a.in, "Input JSONL");
  svg_cmd->add_option("--out", svg_a.out, "Output .svg (single sketch), directory, or - for stdout");
  svg_cmd->add_option("--jobs", svg_a.jobs, "Parallel workers")->check(CLI::PositiveNumber);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*ingest_cmd) cmd_ingest(ingest_a, as_json, io);
    else if (*synth_cmd) cmd_synth(synth_a, io);
    else if (*tok_cmd) cmd_tokenize(tok_a, io);
    else if (*render_cmd) cmd_render(render_a, io);
    else if (*train_cmd) cmd_train(train_a, as_json, io);
    else if (*eval_cmd) cmd_eval(eval_a, as_json, io);
    else if (*complete_cmd) cmd_complete(complete_a, io);
    else if (*constrain_cmd) cmd_constrain(constrain_a, io);
    else if (*svg_cmd) cmd_export_svg(svg_a, io);
  } catch (const CLI::Error& e) {
    err << "usage error: " << e.what() << '\n' << app.help();
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  out.flush();
  return kExitOk;
}

}  // namespace cadvlm::cli
