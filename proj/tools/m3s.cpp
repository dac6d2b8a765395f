// Copyright 2026 The m3s Authors
// SPDX-License-Identifier: Apache-2.0

// m3s: synth-data, build-vocab, train, generate, evaluate, inspect-checkpoint.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "m3s/data/batch.hpp"
#include "m3s/data/corpus.hpp"
#include "m3s/data/synth.hpp"
#include "m3s/data/vision_io.hpp"
#include "m3s/data/vocab.hpp"
#include "m3s/errors.hpp"
#include "m3s/eval/beam.hpp"
#include "m3s/eval/grid.hpp"
#include "m3s/training/checkpoint.hpp"
#include "m3s/training/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace m3s;

namespace {

const std::vector<std::string> kDefaultLanguages{"en", "id", "ru", "ur"};

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("failed writing " + path.string());
}

void write_manifest(const fs::path& dir, const json& manifest) {
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DataError("cannot create output directory " + dir.string());
}

// --seed, else M3S_SEED, else the given default.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, std::uint64_t fallback) {
  if (flag) return *flag;
  if (const char* env = std::getenv("M3S_SEED"); env != nullptr && *env != '\0') {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string("M3S_SEED is not an unsigned integer: ") + env);
    }
  }
  return fallback;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Languages in first-appearance order, which is the order synth-data writes them.
std::vector<std::string> corpus_languages(const std::vector<data::CorpusRecord>& records) {
  std::vector<std::string> langs;
  for (const auto& r : records) {
    if (std::find(langs.begin(), langs.end(), r.lang) == langs.end()) langs.push_back(r.lang);
  }
  return langs;
}

std::vector<data::Direction> all_directions(const std::vector<std::string>& langs) {
  std::vector<data::Direction> dirs;
  for (const auto& s : langs) {
    for (const auto& t : langs) dirs.push_back({s, t});
  }
  return dirs;
}

// ---- synth-data ----

struct SynthArgs {
  std::optional<std::uint64_t> seed;
  std::size_t langs = 4;
  std::string languages;
  std::size_t per_pair = 8;
  std::size_t test_per_pair = 0;
  std::size_t latent_words = 0;
  std::size_t max_vocab = 1000;
  std::string config;
  std::string out = "data";
};

int cmd_synth(const SynthArgs& a) {
  json j = a.config.empty() ? json::object() : read_json_file(a.config);
  data::SynthConfig cfg = j.get<data::SynthConfig>();
  cfg.seed = resolve_seed(a.seed, cfg.seed);
  if (!a.languages.empty()) {
    cfg.languages = split_list(a.languages);
  } else {
    if (a.langs < 2) throw ConfigError("synth-data: --langs must be at least 2");
    cfg.languages.clear();
    for (std::size_t k = 0; k < a.langs; ++k) {
      cfg.languages.push_back(k < kDefaultLanguages.size() ? kDefaultLanguages[k] : "l" + std::to_string(k));
    }
  }
  cfg.per_pair = a.per_pair;
  cfg.test_per_pair = a.test_per_pair;
  if (a.latent_words > 0) cfg.latent_words = a.latent_words;
  cfg.validate();

  const fs::path out(a.out);
  ensure_dir(out);
  const data::SynthCorpus corpus = data::synth_corpus(cfg);
  const data::SynthFiles files = data::write_synth(corpus, out);
  const data::Vocab vocab = data::build_vocab(data::corpus_texts(corpus.train), a.max_vocab, cfg.languages);
  vocab.save(out / "vocab.txt");

  std::map<std::string, std::size_t> per_direction;
  for (const auto& r : corpus.train) {
    ++per_direction[r.lang + "-" + r.lang];
    for (const auto& [src, doc] : r.aligned) ++per_direction[src + "-" + r.lang];
  }
  std::cout << "wrote " << corpus.train.size() << " train records, " << corpus.test.size() << " test records, "
            << corpus.vision.size() << " vision records, vocab " << vocab.size() << " ids\n";
  for (const auto& [dir, n] : per_direction) std::cout << "  " << dir << ": " << n << "\n";

  json outputs{{"train", files.train.string()}, {"vision", files.vision.string()}, {"vocab", (out / "vocab.txt").string()}};
  if (!files.test.empty()) outputs["test"] = files.test.string();
  write_manifest(out, {{"command", "synth-data"},
                       {"seed", cfg.seed},
                       {"synth", cfg},
                       {"max_vocab", a.max_vocab},
                       {"outputs", outputs}});
  return 0;
}

// ---- build-vocab ----

struct VocabArgs {
  std::vector<std::string> corpora;
  std::string languages;
  std::size_t max_size = 1000;
  std::string out = "vocab.txt";
};

int cmd_build_vocab(const VocabArgs& a) {
  std::vector<data::CorpusRecord> records;
  for (const auto& path : a.corpora) {
    auto part = data::read_corpus(path);
    records.insert(records.end(), part.begin(), part.end());
  }
  const auto langs = a.languages.empty() ? corpus_languages(records) : split_list(a.languages);
  const data::Vocab vocab = data::build_vocab(data::corpus_texts(records), a.max_size, langs);
  vocab.save(a.out);
  std::cout << "vocab: " << vocab.size() << " ids (" << vocab.reserved() << " reserved) -> " << a.out << "\n";
  const fs::path dir = fs::path(a.out).parent_path().empty() ? fs::path(".") : fs::path(a.out).parent_path();
  write_manifest(dir, {{"command", "build-vocab"},
                       {"inputs", a.corpora},
                       {"languages", langs},
                       {"max_size", a.max_size},
                       {"outputs", {{"vocab", a.out}}}});
  return 0;
}

// ---- train ----

struct TrainArgs {
  std::string config;
  std::string data = "data";
  std::string out = "run";
  std::string resume;
  std::string languages;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps, horizon, batch, warmup, eval_interval;
  std::optional<double> lr, beta, tau, smoothing, fixed_alpha;
  std::string kd_mode;
};

struct DataDir {
  std::vector<data::CorpusRecord> records;
  std::vector<std::string> languages;
  data::Vocab vocab;
  data::VisionStore vision;
};

DataDir load_data_dir(const fs::path& dir, const std::string& corpus_name, const std::string& languages_flag) {
  DataDir d;
  d.records = data::read_corpus(dir / corpus_name);
  d.languages = languages_flag.empty() ? corpus_languages(d.records) : split_list(languages_flag);
  d.vocab = data::Vocab::load(dir / "vocab.txt", d.languages);
  d.vision = data::VisionStore(data::read_vision_file(dir / "vision.bin"));
  return d;
}

int cmd_train(const TrainArgs& a) {
  const json file = a.config.empty() ? json::object() : read_json_file(a.config);
  for (const auto& [k, v] : file.items()) {
    if (k != "model" && k != "train") throw ConfigError("config file: unknown section '" + k + "'");
  }
  const fs::path out(a.out);
  ensure_dir(out);

  DataDir d = load_data_dir(a.data, "train.jsonl", a.languages);
  json model_json = file.value("model", json::object());
  if (!model_json.contains("vocab_size")) model_json["vocab_size"] = d.vocab.size();
  if (!model_json.contains("languages")) model_json["languages"] = d.languages.size();
  ModelConfig model = model_json.get<ModelConfig>();

  std::optional<training::Checkpoint> ck;
  json train_json = file.value("train", json::object());
  if (!a.resume.empty()) {
    ck = training::load_checkpoint(a.resume);
    // the checkpoint's resolved settings are the base; file and flags still override
    json base = ck->train;
    for (const auto& [k, v] : train_json.items()) base[k] = v;
    train_json = base;
    model = ck->model;
  }
  training::TrainConfig train = train_json.get<training::TrainConfig>();
  train.seed = resolve_seed(a.seed, train.seed);
  if (a.steps) train.max_steps = *a.steps;
  if (a.horizon) train.horizon = *a.horizon;
  if (a.batch) train.batch = *a.batch;
  if (a.warmup) train.warmup = *a.warmup;
  if (a.eval_interval) train.eval_interval = *a.eval_interval;
  if (a.lr) train.lr = *a.lr;
  if (a.beta) train.beta = *a.beta;
  if (a.tau) train.tau = *a.tau;
  if (a.smoothing) train.smoothing = *a.smoothing;
  if (a.fixed_alpha) train.fixed_alpha = *a.fixed_alpha;
  if (!a.kd_mode.empty()) train.kd_mode = a.kd_mode;
  train.checkpoint_path = (out / "checkpoint.bin").string();
  train.metrics_path = (out / "metrics.jsonl").string();
  model.validate();
  train.validate();

  training::TrainData td{d.vocab, data::tokenize_corpus(d.records, d.vocab), std::move(d.vision)};
  // construction validates every direction against the corpus before any step runs
  training::Trainer trainer = ck ? training::Trainer(*ck, train, std::move(td)) : training::Trainer(model, train, std::move(td));
  if (!ck) std::filesystem::remove(train.metrics_path);

  write_manifest(out, {{"command", "train"},
                       {"seed", train.seed},
                       {"model", trainer.model_config()},
                       {"train", train},
                       {"languages", d.languages},
                       {"inputs", {{"data", a.data}, {"config", a.config}, {"resume", a.resume}}},
                       {"outputs", {{"checkpoint", train.checkpoint_path}, {"metrics", train.metrics_path}}}});

  trainer.set_observer([&](const training::StepRecord& r) {
    if (r.step % train.eval_interval == 0 || r.step == train.max_steps) {
      std::cout << "step " << r.step << " " << r.direction.to_string() << " alpha " << r.losses.alpha << " lr " << r.lr
                << " joint " << r.losses.joint << "\n";
    }
  });
  const std::size_t start = trainer.steps();
  trainer.run_until(train.max_steps);
  if (trainer.steps() == start) training::save_checkpoint(trainer.checkpoint(), train.checkpoint_path);
  std::cout << "trained to step " << trainer.steps() << " -> " << train.checkpoint_path << "\n";
  return 0;
}

// ---- generate / evaluate ----

struct GenArgs {
  std::string checkpoint;
  std::string corpus;
  std::string vision;
  std::string directions;
  std::size_t beam = 4;
  double length_penalty = 0.6;
  std::size_t max_len = 0;
  std::string out = "eval";
};

struct Loaded {
  training::Checkpoint ck;
  data::Vocab vocab;
  std::vector<data::Sample> samples;
  data::VisionStore vision;
  std::vector<data::Direction> directions;
  eval::BeamConfig beam;
};

Loaded load_for_inference(const GenArgs& a) {
  Loaded l;
  l.ck = training::load_checkpoint(a.checkpoint);
  l.vocab = data::Vocab(l.ck.languages, l.ck.vocab_words);
  l.samples = data::tokenize_corpus(data::read_corpus(a.corpus), l.vocab);
  l.vision = data::VisionStore(data::read_vision_file(a.vision));
  l.directions = a.directions.empty() ? all_directions(l.ck.languages) : data::parse_directions(a.directions);
  std::set<std::string> present;
  for (const auto& s : l.samples) present.insert(s.lang);
  for (const auto& dir : l.directions) {
    l.vocab.language_tag(dir.src);
    l.vocab.language_tag(dir.tgt);
    if (present.count(dir.tgt) == 0) throw DataError("direction " + dir.to_string() + ": corpus has no '" + dir.tgt + "' samples");
  }
  l.beam.beam_size = a.beam;
  l.beam.length_penalty = a.length_penalty;
  l.beam.max_len = a.max_len;
  l.beam.eos = data::kEos;
  l.beam.validate();
  return l;
}

json inference_manifest(const std::string& command, const GenArgs& a, const Loaded& l, const json& outputs) {
  std::vector<std::string> dirs;
  for (const auto& d : l.directions) dirs.push_back(d.to_string());
  return {{"command", command},
          {"model", l.ck.model},
          {"train", l.ck.train},
          {"beam", l.beam},
          {"directions", dirs},
          {"inputs", {{"checkpoint", a.checkpoint}, {"corpus", a.corpus}, {"vision", a.vision}}},
          {"outputs", outputs}};
}

int cmd_generate(const GenArgs& a) {
  const Loaded l = load_for_inference(a);
  const fs::path out(a.out);
  ensure_dir(out);
  const Model<float> model(l.ck.model, l.ck.params);
  const eval::Summarizer summarize = eval::model_summarizer(model, l.vocab, l.vision, l.beam);
  std::string lines;
  std::size_t n = 0;
  for (const auto& dir : l.directions) {
    for (const auto& s : l.samples) {
      if (s.lang != dir.tgt) continue;
      if (!dir.monolingual() && s.aligned.count(dir.src) == 0) {
        throw DataError("sample " + s.id + " has no aligned '" + dir.src + "' document for " + dir.to_string());
      }
      const auto ids = summarize(s, dir);
      lines += json{{"id", s.id}, {"direction", dir.to_string()}, {"summary", data::detokenize(ids, l.vocab)}}.dump() + "\n";
      ++n;
    }
  }
  const fs::path path = out / "summaries.jsonl";
  write_text(path, lines);
  write_manifest(out, inference_manifest("generate", a, l, {{"summaries", path.string()}}));
  std::cout << "generated " << n << " summaries -> " << path.string() << "\n";
  return 0;
}

int cmd_evaluate(const GenArgs& a) {
  const Loaded l = load_for_inference(a);
  const fs::path out(a.out);
  ensure_dir(out);
  const Model<float> model(l.ck.model, l.ck.params);
  const eval::GridResult grid =
      eval::eval_grid(l.samples, l.directions, eval::model_summarizer(model, l.vocab, l.vision, l.beam), l.vocab.reserved());
  std::string lines;
  for (const auto& r : grid.records()) lines += r.dump() + "\n";
  write_text(out / "grid.jsonl", lines);
  write_text(out / "grid.txt", grid.table());
  write_manifest(out, inference_manifest("evaluate", a, l,
                                         {{"grid", (out / "grid.txt").string()}, {"records", (out / "grid.jsonl").string()}}));
  std::cout << grid.table();
  return 0;
}

// ---- inspect-checkpoint ----

int cmd_inspect(const std::string& path) {
  const training::Checkpoint ck = training::load_checkpoint(path);
  std::cout << "step " << ck.step << ", adam step " << ck.adam_step << ", activation " << ck.model.activation << "\n";
  std::cout << "languages:";
  for (const auto& l : ck.languages) std::cout << " " << l;
  std::cout << "\nvocab words: " << ck.vocab_words.size() << "\n";
  std::cout << "model: " << json(ck.model).dump() << "\n";
  std::cout << "train: " << json(ck.train).dump() << "\n";
  std::cout << ck.params.size() << " tensors, " << ck.params.scalar_count() << " scalars\n";
  for (const auto& e : ck.params.entries()) std::cout << "  " << e.name << " " << ad::to_string(e.tensor.shape()) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"m3s: many-to-many multimodal summarization toolkit"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* sc = app.add_subcommand("synth-data", "Generate a synthetic aligned multimodal corpus");
  sc->add_option("--seed", synth.seed, "RNG seed (falls back to M3S_SEED)");
  sc->add_option("--langs", synth.langs, "Number of languages K");
  sc->add_option("--languages", synth.languages, "Comma-separated language tags (overrides --langs)");
  sc->add_option("--per-pair", synth.per_pair, "Training articles, i.e. samples per direction");
  sc->add_option("--test-per-pair", synth.test_per_pair, "Held-out articles");
  sc->add_option("--latent-words", synth.latent_words, "Latent vocabulary size per language");
  sc->add_option("--max-vocab", synth.max_vocab, "Vocab size cap including reserved ids");
  sc->add_option("--config", synth.config, "JSON generator config");
  sc->add_option("--out", synth.out, "Output directory");

  VocabArgs vocab;
  auto* bv = app.add_subcommand("build-vocab", "Build a frequency-ranked vocabulary");
  bv->add_option("--corpus", vocab.corpora, "Corpus JSONL file(s)")->required();
  bv->add_option("--languages", vocab.languages, "Comma-separated language tags (default: corpus order)");
  bv->add_option("--max-size", vocab.max_size, "Total ids including reserved");
  bv->add_option("--out", vocab.out, "Output vocab file");

  TrainArgs train;
  auto* tr = app.add_subcommand("train", "Train on a data directory");
  tr->add_option("--config", train.config, "JSON config with optional 'model' and 'train' sections");
  tr->add_option("--data", train.data, "Directory with train.jsonl, vision.bin, vocab.txt");
  tr->add_option("--out", train.out, "Output directory");
  tr->add_option("--resume", train.resume, "Checkpoint to continue from");
  tr->add_option("--languages", train.languages, "Comma-separated language order (default: corpus order)");
  tr->add_option("--seed", train.seed, "Seed (falls back to M3S_SEED)");
  tr->add_option("--steps", train.steps, "Max steps T");
  tr->add_option("--horizon", train.horizon, "Annealing horizon T1");
  tr->add_option("--batch", train.batch, "Batch size");
  tr->add_option("--warmup", train.warmup, "Warmup steps");
  tr->add_option("--eval-interval", train.eval_interval, "Metrics/checkpoint interval");
  tr->add_option("--lr", train.lr, "Peak learning rate");
  tr->add_option("--beta", train.beta, "TCO weight");
  tr->add_option("--tau", train.tau, "TCO temperature");
  tr->add_option("--smoothing", train.smoothing, "Label smoothing");
  tr->add_option("--fixed-alpha", train.fixed_alpha, "Hold alpha constant (ablation)");
  tr->add_option("--kd-mode", train.kd_mode, "cosine or kl");

  GenArgs gen;
  auto add_gen = [](CLI::App* c, GenArgs& g) {
    c->add_option("--checkpoint", g.checkpoint, "Checkpoint file")->required();
    c->add_option("--corpus", g.corpus, "Corpus JSONL")->required();
    c->add_option("--vision", g.vision, "Vision feature file")->required();
    c->add_option("--directions", g.directions, "Comma-separated src-tgt list (default: all K x K)");
    c->add_option("--beam", g.beam, "Beam size");
    c->add_option("--length-penalty", g.length_penalty, "Length penalty gamma");
    c->add_option("--max-len", g.max_len, "Max generated tokens (0: model max)");
    c->add_option("--out", g.out, "Output directory");
  };
  auto* gc = app.add_subcommand("generate", "Write generated summaries");
  add_gen(gc, gen);
  GenArgs ev;
  auto* ec = app.add_subcommand("evaluate", "Score generated summaries on a src x tgt grid");
  add_gen(ec, ev);

  std::string inspect_path;
  auto* ic = app.add_subcommand("inspect-checkpoint", "Print a checkpoint's header and tensor table");
  ic->add_option("path", inspect_path, "Checkpoint file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sc) return cmd_synth(synth);
    if (*bv) return cmd_build_vocab(vocab);
    if (*tr) return cmd_train(train);
    if (*gc) return cmd_generate(gen);
    if (*ec) return cmd_evaluate(ev);
    if (*ic) return cmd_inspect(inspect_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const LoadError& e) {
    std::cerr << "load error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
