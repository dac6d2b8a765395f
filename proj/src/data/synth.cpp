// Copyright 2026 The m3s Authors
// SPDX-License-Identifier: Apache-2.0

#include "m3s/data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>

#include "m3s/errors.hpp"

namespace m3s::data {

void SynthConfig::validate() const {
  if (languages.size() < 2) throw ConfigError("synth: need at least 2 languages");
  if (std::set<std::string>(languages.begin(), languages.end()).size() != languages.size()) {
    throw ConfigError("synth: duplicate language");
  }
  for (const auto& l : languages) {
    if (l.empty() || l.find_first_of(" \t\n-") != std::string::npos) throw ConfigError("synth: bad language tag '" + l + "'");
  }
  if (per_pair == 0) throw ConfigError("synth: per_pair must be positive");
  if (latent_words < 2) throw ConfigError("synth: latent_words must be at least 2");
  if (lead_min == 0 || lead_min > lead_max || rest_min > rest_max) throw ConfigError("synth: bad length ranges");
  if (images == 0 || regions == 0 || d_v == 0) throw ConfigError("synth: vision extents must be positive");
  if (informative_regions > regions) throw ConfigError("synth: informative_regions exceeds regions");
  if (noise < 0.0 || masked_image_rate < 0.0 || masked_image_rate >= 1.0) throw ConfigError("synth: bad noise or mask rate");
}

void to_json(nlohmann::json& j, const SynthConfig& c) {
  j = nlohmann::json{{"seed", c.seed},
                     {"languages", c.languages},
                     {"per_pair", c.per_pair},
                     {"test_per_pair", c.test_per_pair},
                     {"latent_words", c.latent_words},
                     {"lead_min", c.lead_min},
                     {"lead_max", c.lead_max},
                     {"rest_min", c.rest_min},
                     {"rest_max", c.rest_max},
                     {"images", c.images},
                     {"regions", c.regions},
                     {"d_v", c.d_v},
                     {"informative_regions", c.informative_regions},
                     {"noise", c.noise},
                     {"masked_image_rate", c.masked_image_rate}};
}

void from_json(const nlohmann::json& j, SynthConfig& c) {
  SynthConfig d;
  nlohmann::json full;
  to_json(full, d);
  for (const auto& [k, v] : j.items()) {
    if (!full.contains(k)) throw ConfigError("synth config: unknown key '" + k + "'");
    full[k] = v;
  }
  c.seed = full["seed"].get<std::uint64_t>();
  c.languages = full["languages"].get<std::vector<std::string>>();
  c.per_pair = full["per_pair"].get<std::size_t>();
  c.test_per_pair = full["test_per_pair"].get<std::size_t>();
  c.latent_words = full["latent_words"].get<std::size_t>();
  c.lead_min = full["lead_min"].get<std::size_t>();
  c.lead_max = full["lead_max"].get<std::size_t>();
  c.rest_min = full["rest_min"].get<std::size_t>();
  c.rest_max = full["rest_max"].get<std::size_t>();
  c.images = full["images"].get<std::size_t>();
  c.regions = full["regions"].get<std::size_t>();
  c.d_v = full["d_v"].get<std::size_t>();
  c.informative_regions = full["informative_regions"].get<std::size_t>();
  c.noise = full["noise"].get<double>();
  c.masked_image_rate = full["masked_image_rate"].get<double>();
}

namespace {

// Uniform integer in [lo, hi] without relying on the library's distribution
// algorithms, so files stay identical across standard library versions.
std::size_t draw(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng() % (hi - lo + 1));
}

double unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Box-Muller; same portability reason as draw().
double gaussian(std::mt19937_64& rng) {
  const double u1 = 1.0 - unit(rng);
  const double u2 = unit(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

void shuffle(std::vector<std::size_t>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[draw(rng, 0, i - 1)]);
}

struct World {
  std::vector<std::vector<std::size_t>> spelling;  // per language: latent word -> surface index
  std::vector<double> probe;                       // d_v x latent_words
};

std::string render(const std::vector<std::size_t>& latent, const std::string& lang, const std::vector<std::size_t>& perm) {
  std::string out;
  for (std::size_t w : latent) {
    if (!out.empty()) out += ' ';
    out += lang + std::to_string(perm[w]);
  }
  return out;
}

void article(const SynthConfig& c, const World& world, std::mt19937_64& rng, const std::string& key,
             std::vector<CorpusRecord>& records, std::vector<VisionRecord>& vision) {
  std::vector<std::size_t> lead(draw(rng, c.lead_min, c.lead_max));
  for (auto& w : lead) w = draw(rng, 0, c.latent_words - 1);
  std::vector<std::size_t> rest(draw(rng, c.rest_min, c.rest_max));
  for (auto& w : rest) w = draw(rng, 0, c.latent_words - 1);

  std::vector<std::string> docs, summaries;
  for (std::size_t l = 0; l < c.languages.size(); ++l) {
    const std::string summary = render(lead, c.languages[l], world.spelling[l]);
    std::string doc = summary + " .";
    if (!rest.empty()) doc += " " + render(rest, c.languages[l], world.spelling[l]);
    docs.push_back(doc);
    summaries.push_back(summary);
  }
  for (std::size_t l = 0; l < c.languages.size(); ++l) {
    CorpusRecord r;
    r.id = key + "-" + c.languages[l];
    r.url = "synth://" + key;
    r.lang = c.languages[l];
    r.doc = docs[l];
    r.summary = summaries[l];
    for (std::size_t o = 0; o < c.languages.size(); ++o) {
      if (o != l) r.aligned.emplace(c.languages[o], docs[o]);
    }
    r.vision_ref = key;
    records.push_back(std::move(r));
  }

  std::vector<double> bag(c.latent_words, 0.0);
  for (std::size_t w : lead) bag[w] += 1.0 / static_cast<double>(lead.size());
  std::vector<double> signal(c.d_v, 0.0);
  for (std::size_t k = 0; k < c.d_v; ++k) {
    for (std::size_t w = 0; w < c.latent_words; ++w) signal[k] += world.probe[k * c.latent_words + w] * bag[w];
  }

  VisionRecord v;
  v.id = key;
  v.images = static_cast<std::uint32_t>(c.images);
  v.regions = static_cast<std::uint32_t>(c.regions);
  v.dim = static_cast<std::uint32_t>(c.d_v);
  const std::size_t slots = c.images * c.regions;
  v.features.resize(slots * c.d_v);
  v.boxes.resize(slots * 4);
  v.mask.assign(slots, 1);
  std::vector<std::size_t> masked_images;
  for (std::size_t i = 0; i < c.images; ++i) {
    // image 0 always stays visible so every article has some vision
    if (i > 0 && unit(rng) < c.masked_image_rate) masked_images.push_back(i);
  }
  for (std::size_t i = 0; i < c.images; ++i) {
    std::vector<std::size_t> order(c.regions);
    std::iota(order.begin(), order.end(), 0);
    shuffle(order, rng);
    for (std::size_t j = 0; j < c.regions; ++j) {
      const std::size_t slot = i * c.regions + j;
      const bool informative = std::find(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(c.informative_regions), j) !=
                               order.begin() + static_cast<std::ptrdiff_t>(c.informative_regions);
      for (std::size_t k = 0; k < c.d_v; ++k) {
        const double x = (informative ? signal[k] : 0.0) + c.noise * gaussian(rng);
        v.features[slot * c.d_v + k] = static_cast<float>(x);
      }
      double x0 = unit(rng), x1 = unit(rng), y0 = unit(rng), y1 = unit(rng);
      if (x0 > x1) std::swap(x0, x1);
      if (y0 > y1) std::swap(y0, y1);
      v.boxes[slot * 4 + 0] = static_cast<float>(x0);
      v.boxes[slot * 4 + 1] = static_cast<float>(y0);
      v.boxes[slot * 4 + 2] = static_cast<float>(x1);
      v.boxes[slot * 4 + 3] = static_cast<float>(y1);
      if (std::find(masked_images.begin(), masked_images.end(), i) != masked_images.end()) v.mask[slot] = 0;
    }
  }
  vision.push_back(std::move(v));
}

}  // namespace

SynthCorpus synth_corpus(const SynthConfig& c) {
  c.validate();
  std::mt19937_64 rng(c.seed);
  World world;
  for (std::size_t l = 0; l < c.languages.size(); ++l) {
    std::vector<std::size_t> perm(c.latent_words);
    std::iota(perm.begin(), perm.end(), 0);
    shuffle(perm, rng);
    world.spelling.push_back(std::move(perm));
  }
  world.probe.resize(c.d_v * c.latent_words);
  for (auto& p : world.probe) p = gaussian(rng);

  SynthCorpus out;
  char key[32];
  for (std::size_t a = 0; a < c.per_pair; ++a) {
    std::snprintf(key, sizeof key, "a%04zu", a);
    article(c, world, rng, key, out.train, out.vision);
  }
  for (std::size_t a = 0; a < c.test_per_pair; ++a) {
    std::snprintf(key, sizeof key, "t%04zu", a);
    article(c, world, rng, key, out.test, out.vision);
  }
  return out;
}

SynthFiles write_synth(const SynthCorpus& corpus, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
  SynthFiles files{dir / "train.jsonl", corpus.test.empty() ? std::filesystem::path{} : dir / "test.jsonl",
                   dir / "vision.bin"};
  write_corpus(files.train, corpus.train);
  if (!corpus.test.empty()) write_corpus(files.test, corpus.test);
  write_vision_file(files.vision, corpus.vision);
  return files;
}

}  // namespace m3s::data
