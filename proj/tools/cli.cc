// Copyright 2026 The lexpyr Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "cli.h"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <memory>
#include <optional>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lexpyr/codebook.h"
#include "lexpyr/error.h"
#include "lexpyr/eval.h"
#include "lexpyr/image.h"
#include "lexpyr/incontext.h"
#include "lexpyr/llm.h"
#include "lexpyr/prompts.h"
#include "lexpyr/tokenizer.h"
#include "lexpyr/trainer.h"

namespace lexpyr::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class UsageError : public Error {
 public:
  using Error::Error;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << text;
  if (!f) throw Error("failed writing " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open " + path.string());
  try {
    return json::parse(f, nullptr, true, true);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// Flags of the invoked subcommand with their effective values.
json resolved_flags(const CLI::App& sub) {
  json flags = json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt->get_lnames().empty()) continue;
    const auto& name = opt->get_lnames().front();
    if (name == "help") continue;
    std::vector<std::string> values = opt->results();
    if (values.empty() && !opt->get_default_str().empty()) values = {opt->get_default_str()};
    if (values.empty()) {
      flags[name] = nullptr;
    } else if (values.size() == 1) {
      flags[name] = values.front();
    } else {
      flags[name] = values;
    }
  }
  return flags;
}

struct LlmFlags {
  std::string kind = "oracle";
  std::string url;
  std::string model;
  std::string token_env = "LEXPYR_LLM_TOKEN";
  int timeout_ms = 30000;
  double oracle_truncate = 0.0;
  double oracle_noise = 0.0;

  void add(CLI::App* sub) {
    sub->add_option("--llm", kind, "LLM backend")
        ->check(CLI::IsMember({"oracle", "http"}))
        ->capture_default_str();
    sub->add_option("--llm-url", url, "Completion endpoint for --llm http");
    sub->add_option("--llm-model", model, "Model name sent to the endpoint");
    sub->add_option("--llm-token-env", token_env, "Env var holding the bearer token")
        ->capture_default_str();
    sub->add_option("--llm-timeout-ms", timeout_ms, "Request timeout")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--oracle-truncate", oracle_truncate, "Oracle truncation probability")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    sub->add_option("--oracle-noise", oracle_noise, "Oracle token noise probability")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
  }

  OracleConfig oracle_config(std::uint64_t seed) const {
    OracleConfig c;
    c.truncate_prob = oracle_truncate;
    c.noise = oracle_noise;
    c.seed = seed;
    return c;
  }

  std::unique_ptr<LLMClient> http() const {
    if (url.empty()) throw UsageError("--llm http requires --llm-url");
    HttpLLMConfig c;
    c.endpoint.url = url;
    c.endpoint.auth_token_env = token_env;
    c.endpoint.timeout = std::chrono::milliseconds(timeout_ms);
    c.model = model;
    return std::make_unique<HttpLLMClient>(c);
  }
};

// Trained tokenizer plus the dataset splits recorded in its checkpoint.
struct Session {
  TrainConfig config;
  std::unique_ptr<Tokenizer> tokenizer;
  std::optional<std::pair<Dataset, Dataset>> splits;
  std::shared_ptr<const SemanticProvider> provider;

  explicit Session(const fs::path& ckpt)
      : config(checkpoint_train_config(load_checkpoint(ckpt))),
        tokenizer(std::make_unique<Tokenizer>(load_tokenizer(ckpt))) {}

  const Dataset& split(const std::string& name) {
    if (!splits) splits = build_splits(config);
    if (name == "train") return splits->first;
    if (name == "validation") return splits->second;
    throw UsageError("unknown split '" + name + "'");
  }

  const ImageSample& sample(const std::string& split_name, int index) {
    const auto& data = split(split_name);
    if (index < 0 || static_cast<std::size_t>(index) >= data.size()) {
      throw UsageError("--index " + std::to_string(index) + " outside the " + split_name +
                       " split of " + std::to_string(data.size()) + " images");
    }
    return data.samples[static_cast<std::size_t>(index)];
  }

  const SemanticProvider& semantic() {
    if (!provider) provider = build_provider(config.semantic);
    return *provider;
  }

  std::vector<std::string> class_names() const {
    return config.semantic.class_names.empty() ? mnist_class_names()
                                               : config.semantic.class_names;
  }

  int depth_or_all(int layers) const {
    const int depth = tokenizer->spec().depth();
    if (layers == 0) return depth;
    if (layers < 0 || layers > depth) {
      throw UsageError("--layers must be in [1, " + std::to_string(depth) + "]");
    }
    return layers;
  }
};

struct ImageSource {
  std::string image;
  std::string split = "validation";
  int index = -1;

  void add(CLI::App* sub) {
    auto* img = sub->add_option("--image", image, "Input PGM/PPM image");
    auto* idx = sub->add_option("--index", index, "Image index in --split instead of --image");
    img->excludes(idx);
    sub->add_option("--split", split, "Dataset split for --index")
        ->check(CLI::IsMember({"train", "validation"}))
        ->capture_default_str();
  }

  ImageSample load(Session& s) const {
    if (!image.empty()) {
      ImageSample sample{read_netpbm(image), -1, -1};
      const auto& net = s.config.net;
      if (sample.image.height != net.input_height || sample.image.width != net.input_width ||
          sample.image.channels != net.in_channels) {
        throw InvalidArgument("image is " + std::to_string(sample.image.height) + "x" +
                              std::to_string(sample.image.width) + "x" +
                              std::to_string(sample.image.channels) + ", the model expects " +
                              std::to_string(net.input_height) + "x" +
                              std::to_string(net.input_width) + "x" +
                              std::to_string(net.in_channels));
      }
      return sample;
    }
    if (index < 0) throw UsageError("give --image or --index");
    return s.sample(split, index);
  }
};

json pyramid_record(const TokenPyramid& pyramid, const Tokenizer& tokenizer, int layers) {
  return {{"pyramid", pyramid},
          {"layers", layers},
          {"spae", tokenizer.to_string(pyramid, layers)}};
}

TokenPyramid read_pyramid(const fs::path& path) {
  const auto j = read_json(path);
  try {
    return (j.contains("pyramid") ? j.at("pyramid") : j).get<TokenPyramid>();
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void snapshot(const fs::path& path, const std::string& verb, const CLI::App& sub,
              std::uint64_t seed) {
  write_json(path, {{"verb", verb}, {"seed", seed}, {"flags", resolved_flags(sub)}});
}

fs::path snapshot_beside(const fs::path& file) {
  return fs::path(file.string() + ".run.json");
}

using Action = std::function<void()>;

void add_train(CLI::App& app, std::uint64_t& seed, std::ostream& out, Action& action) {
  auto* sub = app.add_subcommand("train", "Train a tokenizer from a config file");
  auto config = std::make_shared<std::string>();
  auto steps = std::make_shared<int>(0);
  auto output = std::make_shared<std::string>();
  auto resume = std::make_shared<std::string>();
  auto lr = std::make_shared<double>(0.0);
  sub->add_option("--config", *config, "Training config (JSON)")->required()->check(CLI::ExistingFile);
  sub->add_option("--steps", *steps, "Override total_steps")->check(CLI::PositiveNumber);
  sub->add_option("--out", *output, "Override output_dir");
  sub->add_option("--resume", *resume, "Resume from a checkpoint")->check(CLI::ExistingFile);
  sub->add_option("--lr", *lr, "Override base_lr")->check(CLI::PositiveNumber);
  sub->callback([=, &app, &seed, &out, &action] {
    action = [=, &app, &seed, &out] {
      auto c = load_train_config(*config);
      if (*steps > 0) {
        c.total_steps = *steps;
        c.warmup_steps = std::min(c.warmup_steps, *steps / 2);
        c.cooldown_steps = std::min(c.cooldown_steps, *steps - c.warmup_steps);
        c.checkpoint_every = std::min(c.checkpoint_every, *steps);
        c.log_every = std::min(c.log_every, *steps);
      }
      if (!output->empty()) c.output_dir = *output;
      if (*lr > 0.0) c.base_lr = *lr;
      if (app.count("--seed") > 0) c.seed = seed;
      TrainOptions options;
      if (!resume->empty()) options.resume = fs::path(*resume);
      const auto result = train(c, options);
      snapshot(c.output_dir / "run.json", "train", *sub, c.seed);
      json summary = {{"checkpoint", result.checkpoint.string()},
                      {"metrics", result.metrics_log.string()},
                      {"codebook_frozen",
                       result.codebook_checksum_before == result.codebook_checksum_after}};
      if (!result.history.empty()) summary["last"] = result.history.back();
      out << summary.dump() << "\n";
    };
  });
}

void add_codebook(CLI::App& app, std::uint64_t& seed, std::ostream& out, Action& action) {
  auto* sub = app.add_subcommand("codebook", "Build a lexical codebook directory");
  auto config = std::make_shared<std::string>();
  auto output = std::make_shared<std::string>();
  auto size = std::make_shared<int>(1000);
  auto dim = std::make_shared<int>(32);
  auto semantic_dim = std::make_shared<int>(64);
  auto templates = std::make_shared<std::string>();
  sub->add_option("--config", *config, "Take codebook and semantic settings from a training config")
      ->check(CLI::ExistingFile);
  sub->add_option("--out", *output, "Output directory")->required();
  sub->add_option("--size", *size, "Synthetic vocabulary size")->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--dim", *dim, "Embedding dimension")->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--semantic-dim", *semantic_dim, "Text feature dimension")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--templates", *templates, "Prompt templates, one per line")
      ->check(CLI::ExistingFile);
  sub->callback([=, &seed, &out, &action] {
    action = [=, &seed, &out] {
      CodebookConfig cb;
      SemanticConfig sem;
      int latent = *dim;
      if (!config->empty()) {
        const auto c = load_train_config(*config);
        cb = c.codebook;
        sem = c.semantic;
        latent = c.net.latent_dim;
      } else {
        cb.size = *size;
        cb.seed = seed;
        sem.dim = *semantic_dim;
        if (!templates->empty()) sem.templates_path = *templates;
      }
      const auto codebook = build_codebook(cb, latent, sem);
      save_codebook(codebook, *output);
      snapshot(fs::path(*output) / "run.json", "codebook", *sub, seed);
      out << json{{"dir", *output},
                  {"size", codebook.size()},
                  {"dim", codebook.dim()},
                  {"semantic_dim", codebook.semantic_dim()},
                  {"checksum", codebook.embedding_checksum()}}
                 .dump()
          << "\n";
    };
  });
}

void add_tokenize(CLI::App& app, std::uint64_t& seed, std::ostream& out, Action& action) {
  auto* sub = app.add_subcommand("tokenize", "Encode an image into a token pyramid");
  auto ckpt = std::make_shared<std::string>();
  auto source = std::make_shared<ImageSource>();
  auto layers = std::make_shared<int>(0);
  auto output = std::make_shared<std::string>();
  sub->add_option("--ckpt", *ckpt, "Trained checkpoint")->required()->check(CLI::ExistingFile);
  source->add(sub);
  sub->add_option("--layers", *layers, "Layers in the SPAE string (0 = all)");
  sub->add_option("--out", *output, "Output JSON")->required();
  sub->callback([=, &seed, &out, &action] {
    action = [=, &seed, &out] {
      Session s(*ckpt);
      const int depth = s.depth_or_all(*layers);
      const auto pyramid = s.tokenizer->encode(source->load(s).image);
      const auto record = pyramid_record(pyramid, *s.tokenizer, depth);
      write_json(*output, record);
      snapshot(snapshot_beside(*output), "tokenize", *sub, seed);
      out << record.at("spae").get<std::string>() << "\n";
    };
  });
}

void add_reconstruct(CLI::App& app, std::uint64_t& seed, std::ostream& out, Action& action) {
  auto* sub = app.add_subcommand("reconstruct", "Decode a token pyramid into an image");
  auto ckpt = std::make_shared<std::string>();
  auto tokens = std::make_shared<std::string>();
  auto depth = std::make_shared<int>(0);
  auto output = std::make_shared<std::string>();
  sub->add_option("--ckpt", *ckpt, "Trained checkpoint")->required()->check(CLI::ExistingFile);
  sub->add_option("--tokens", *tokens, "Pyramid JSON")->required()->check(CLI::ExistingFile);
  sub->add_option("--depth", *depth, "Decode layers 1..depth (0 = all)");
  sub->add_option("--out", *output, "Output PGM/PPM")->required();
  sub->callback([=, &seed, &out, &action] {
    action = [=, &seed, &out] {
      Session s(*ckpt);
      const auto pyramid = read_pyramid(*tokens);
      pyramid.validate(s.tokenizer->codebook().size());
      if (!(pyramid.spec == s.tokenizer->spec())) {
        throw InvalidArgument("pyramid spec differs from the checkpoint's");
      }
      const auto image = s.tokenizer->decode(pyramid, s.depth_or_all(*depth));
      if (fs::path(*output).has_parent_path()) fs::create_directories(fs::path(*output).parent_path());
      write_netpbm(image, *output);
      snapshot(snapshot_beside(*output), "reconstruct", *sub, seed);
      out << json{{"image", *output}}.dump() << "\n";
    };
  });
}

void add_corrupt(CLI::App& app, std::uint64_t& seed, std::ostream& out, Action& action) {
  auto* sub = app.add_subcommand("corrupt", "Replace a fraction of pyramid tokens");
  auto tokens = std::make_shared<std::string>();
  auto rate = std::make_shared<double>(0.0);
  auto vocab = std::make_shared<int>(0);
  auto ckpt = std::make_shared<std::string>();
  auto output = std::make_shared<std::string>();
  sub->add_option("--tokens", *tokens, "Pyramid JSON")->required()->check(CLI::ExistingFile);
  sub->add_option("--rate", *rate, "Fraction of positions to replace")
      ->required()
      ->check(CLI::Range(0.0, 1.0));
  auto* v = sub->add_option("--vocab-size", *vocab, "Vocabulary size")->check(CLI::PositiveNumber);
  auto* c = sub->add_option("--ckpt", *ckpt, "Take the vocabulary size from a checkpoint")
                ->check(CLI::ExistingFile);
  v->excludes(c);
  sub->add_option("--out", *output, "Output JSON")->required();
  sub->callback([=, &seed, &out, &action] {
    action = [=, &seed, &out] {
      int vocab_size = *vocab;
      if (!ckpt->empty()) vocab_size = static_cast<int>(load_tokenizer(*ckpt).codebook().size());
      if (vocab_size < 2) throw UsageError("give --vocab-size or --ckpt");
      const auto pyramid = read_pyramid(*tokens);
      pyramid.validate(static_cast<std::size_t>(vocab_size));
      const auto flat = pyramid.flat();
      const auto noisy = corrupt_tokens(flat, *rate, vocab_size, seed);
      std::size_t changed = 0;
      for (std::size_t i = 0; i < flat.size(); ++i) changed += flat[i] != noisy[i] ? 1 : 0;
      write_json(*output, {{"pyramid", TokenPyramid::from_flat(pyramid.spec, noisy)},
                           {"rate", *rate},
                           {"replaced", changed}});
      snapshot(snapshot_beside(*output), "corrupt", *sub, seed);
      out << json{{"replaced", changed}, {"total", flat.size()}}.dump() << "\n";
    };
  });
}

std::string render_prompt(const json& j, const std::optional<LexicalCodebook>& codebook) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "classify") {
    std::vector<LabeledExample> examples;
    for (const auto& e : j.at("examples")) {
      examples.push_back({e.at("spae").get<std::string>(), e.at("label").get<std::string>()});
    }
    ClassifyOptions options;
    options.what_is_this = j.value("what_is_this", false);
    options.task_induction = j.value("task_induction", true);
    return build_classification_prompt(parse_classify_style(j.value("style", "listform")),
                                       j.at("classes").get<std::vector<std::string>>(),
                                       examples, j.at("query").get<std::string>(), options);
  }
  if (kind == "caption") {
    std::vector<CaptionExample> examples;
    for (const auto& e : j.at("examples")) {
      examples.push_back({e.at("spae").get<std::string>(), e.at("caption").get<std::string>()});
    }
    return build_caption_prompt(examples, j.at("query").get<std::string>());
  }
  if (kind == "vqa") {
    std::vector<VqaExample> examples;
    for (const auto& e : j.at("examples")) {
      examples.push_back({e.at("spae").get<std::string>(), e.at("question").get<std::string>(),
                          e.at("answer").get<std::string>()});
    }
    return build_vqa_prompt(examples, j.at("query").get<std::string>(),
                            j.at("question").get<std::string>());
  }
  if (kind == "ar" || kind == "nar") {
    if (!codebook) throw UsageError("'" + kind + "' prompts need --ckpt or --codebook");
    const int stride = j.at("stride").get<int>();
    if (kind == "ar") {
      std::vector<ArExample> examples;
      for (const auto& e : j.at("examples")) {
        examples.push_back({e.at("condition").get<std::string>(),
                            e.at("prefix").get<std::vector<TokenId>>(),
                            e.at("segment").get<std::vector<TokenId>>()});
      }
      return build_ar_prompt(examples, j.at("condition").get<std::string>(),
                             j.at("prefix").get<std::vector<TokenId>>(), stride, *codebook);
    }
    std::vector<NarExample> examples;
    for (const auto& e : j.at("examples")) {
      examples.push_back({e.at("condition").get<std::vector<TokenId>>(),
                          e.at("segment").get<std::vector<TokenId>>()});
    }
    return build_nar_prompt(examples, j.at("condition").get<std::vector<TokenId>>(), stride,
                            *codebook);
  }
  throw InvalidArgument("unknown prompt kind '" + kind + "'");
}

void add_prompt(CLI::App& app, std::uint64_t& seed, std::ostream& out, Action& action) {
  auto* sub = app.add_subcommand("prompt", "Render a prompt from a JSON description");
  auto input = std::make_shared<std::string>();
  auto output = std::make_shared<std::string>();
  auto ckpt = std::make_shared<std::string>();
  auto codebook_dir = std::make_shared<std::string>();
  sub->add_option("--input", *input, "Prompt description (JSON)")->required()->check(CLI::ExistingFile);
  sub->add_option("--out", *output, "Write the prompt here instead of stdout");
  auto* c = sub->add_option("--ckpt", *ckpt, "Checkpoint whose codebook renders token ids")
                ->check(CLI::ExistingFile);
  auto* d = sub->add_option("--codebook", *codebook_dir, "Codebook directory")
                ->check(CLI::ExistingDirectory);
  c->excludes(d);
  sub->callback([=, &seed, &out, &action] {
    action = [=, &seed, &out] {
      std::optional<LexicalCodebook> codebook;
      if (!ckpt->empty()) codebook = load_tokenizer(*ckpt).codebook();
      if (!codebook_dir->empty()) codebook = load_codebook(*codebook_dir);
      std::string text;
      try {
        text = render_prompt(read_json(*input), codebook);
      } catch (const json::exception& e) {
        throw FormatError(*input + ": " + e.what());
      }
      if (output->empty()) {
        out << text;
      } else {
        write_text(*output, text);
        snapshot(snapshot_beside(*output), "prompt", *sub, seed);
      }
    };
  });
}

Image condition_for(const std::string& task, const std::string& transform, int level,
                    const Image& image) {
  if (task == "transform") {
    return pixel_transform(image, parse_pixel_transform(transform), level);
  }
  return mask_image(image, parse_mask_task(task));
}

void add_decode(CLI::App& app, std::uint64_t& seed, std::ostream& out, Action& action) {
  auto* sub = app.add_subcommand("decode", "Generate a pyramid with in-context denoising");
  auto ckpt = std::make_shared<std::string>();
  auto task = std::make_shared<std::string>("inpaint_center");
  auto transform = std::make_shared<std::string>("brightness");
  auto level = std::make_shared<int>(3);
  auto plan_arg = std::make_shared<std::string>("default");
  auto split = std::make_shared<std::string>("validation");
  auto index = std::make_shared<int>(0);
  auto context = std::make_shared<int>(10);
  auto cosine = std::make_shared<bool>(false);
  auto output = std::make_shared<std::string>();
  auto trace_path = std::make_shared<std::string>();
  auto llm = std::make_shared<LlmFlags>();
  sub->add_option("--ckpt", *ckpt, "Trained checkpoint")->required()->check(CLI::ExistingFile);
  sub->add_option("--task", *task, "Conditioning task")
      ->check(CLI::IsMember({"outpaint_bottom", "inpaint_center", "translate_right",
                             "rotate_cw90", "blur", "transform"}))
      ->capture_default_str();
  sub->add_option("--transform", *transform, "Pixel transform for --task transform")
      ->check(CLI::IsMember({"brightness", "contrast", "saturation", "color"}))
      ->capture_default_str();
  sub->add_option("--level", *level, "Transform level 1-4 or 6-9")->capture_default_str();
  sub->add_option("--plan", *plan_arg, "'default' or a plan JSON file")->capture_default_str();
  sub->add_option("--split", *split, "Split holding the query image")
      ->check(CLI::IsMember({"train", "validation"}))
      ->capture_default_str();
  sub->add_option("--index", *index, "Query image index")->capture_default_str();
  sub->add_option("--context", *context, "In-context examples")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_flag("--cosine", *cosine, "Cosine corruption schedule");
  sub->add_option("--out", *output, "Output directory")->required();
  sub->add_option("--trace", *trace_path, "Trace file (default <out>/trace.jsonl)");
  llm->add(sub);
  sub->callback([=, &seed, &out, &action] {
    action = [=, &seed, &out] {
      Session s(*ckpt);
      auto& tok = *s.tokenizer;
      DecodingPlan plan = *plan_arg == "default"
                              ? DecodingPlan::standard(tok.spec())
                              : read_json(*plan_arg).get<DecodingPlan>();
      plan.validate();
      if (plan.total_tokens != token_counts(tok.spec()).cumulative.back()) {
        throw InvalidArgument("plan total_tokens does not match the checkpoint's pyramid");
      }
      const ImageSample query = s.sample(*split, *index);
      const auto& pool = s.split("train");
      if (static_cast<std::size_t>(*context) > pool.size()) {
        throw UsageError("--context exceeds the training split");
      }
      std::mt19937_64 rng(mix_seed(seed, 0xC0DE));
      std::vector<std::size_t> order(pool.size());
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      std::vector<ImageSample> examples;
      for (int i = 0; i < *context; ++i) examples.push_back(pool.samples[order[i]]);

      const ConditionFn condition = [=](const Image& im) {
        return condition_for(*task, *transform, *level, im);
      };
      const TokenizeFn tokenize = [&tok](const Image& im) { return tok.encode(im).flat(); };
      const auto ctx =
          build_denoising_context(examples, query, condition, tokenize,
                                  corruption_schedule(*context, *cosine),
                                  static_cast<int>(tok.codebook().size()), mix_seed(seed, 0xD1CE));
      const auto truth = tokenize(query.image);

      std::unique_ptr<LLMClient> client;
      if (llm->kind == "oracle") {
        auto oracle = std::make_unique<OracleLLM>(tok.codebook(), llm->oracle_config(seed));
        teach_oracle(*oracle, ctx, tok.codebook(), truth);
        client = std::move(oracle);
      } else {
        client = llm->http();
      }

      const fs::path dir = *output;
      fs::create_directories(dir);
      const fs::path trace_file = trace_path->empty() ? dir / "trace.jsonl" : fs::path(*trace_path);
      if (trace_file.has_parent_path()) fs::create_directories(trace_file.parent_path());
      std::ofstream trace_stream(trace_file, std::ios::binary);
      if (!trace_stream) throw Error("cannot write " + trace_file.string());
      const JsonlTrace trace(trace_stream);

      const auto decoded =
          progressive_decode_pyramid(plan, *client, ctx, tok.spec(), tok.codebook(), trace);
      const auto image = tok.decode(decoded, tok.spec().depth());
      const auto cond_image = condition(query.image);
      write_netpbm(query.image, dir / "query.pgm");
      write_netpbm(cond_image, dir / "condition.pgm");
      write_netpbm(image, dir / "decoded.pgm");
      auto record = pyramid_record(decoded, tok, tok.spec().depth());
      const auto flat = decoded.flat();
      int matches = 0;
      for (std::size_t i = 0; i < flat.size(); ++i) matches += flat[i] == truth[i] ? 1 : 0;
      record["token_accuracy"] = static_cast<double>(matches) / static_cast<double>(flat.size());
      record["mse_to_query"] = reconstruction_metrics(query.image, image).mse;
      record["plan"] = plan;
      write_json(dir / "decoded.json", record);
      snapshot(dir / "run.json", "decode", *sub, seed);
      out << json{{"out", dir.string()},
                  {"trace", trace_file.string()},
                  {"token_accuracy", record["token_accuracy"]}}
                 .dump()
          << "\n";
    };
  });
}

void add_classify(CLI::App& app, std::uint64_t& seed, std::ostream& out, Action& action) {
  auto* sub = app.add_subcommand("classify", "Few-shot classification episodes");
  auto ckpt = std::make_shared<std::string>();
  auto cfg = std::make_shared<FewShotConfig>();
  auto style = std::make_shared<std::string>("listform");
  auto no_induction = std::make_shared<bool>(false);
  auto layers = std::make_shared<int>(2);
  auto split = std::make_shared<std::string>("validation");
  auto output = std::make_shared<std::string>();
  auto llm = std::make_shared<LlmFlags>();
  sub->add_option("--ckpt", *ckpt, "Trained checkpoint")->required()->check(CLI::ExistingFile);
  sub->add_option("--ways", cfg->ways, "Classes per episode")->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--shots", cfg->inner_shots, "Support images per class")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--repeats", cfg->repeats, "Consecutive copies of each support item")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--episodes", cfg->episodes, "Episodes")->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--style", *style, "Prompt style")
      ->check(CLI::IsMember({"listform", "thisis"}))
      ->capture_default_str();
  sub->add_flag("--what-is-this", cfg->what_is_this, "Add the question line (thisis style)");
  sub->add_flag("--no-task-induction", *no_induction, "Drop the preamble line");
  sub->add_option("--layers", *layers, "Pyramid layers shown to the LLM")->capture_default_str();
  sub->add_option("--split", *split, "Split to draw episodes from")
      ->check(CLI::IsMember({"train", "validation"}))
      ->capture_default_str();
  sub->add_option("--out", *output, "Output directory")->required();
  llm->add(sub);
  sub->callback([=, &seed, &out, &action] {
    action = [=, &seed, &out] {
      Session s(*ckpt);
      const int depth = s.depth_or_all(*layers);
      FewShotConfig c = *cfg;
      c.style = parse_classify_style(*style);
      c.task_induction = !*no_induction;
      c.seed = seed;
      std::unique_ptr<LLMClient> client;
      if (llm->kind == "oracle") {
        client = std::make_unique<OracleLLM>(s.tokenizer->codebook(), llm->oracle_config(seed));
      } else {
        client = llm->http();
      }
      auto& tok = *s.tokenizer;
      const SpaeFn spae = [&tok, depth](const ImageSample& sample) {
        return tok.to_string(tok.encode(sample.image), depth);
      };
      const auto result = few_shot_classify(c, s.split(*split), s.class_names(), *client, spae);
      const fs::path dir = *output;
      fs::create_directories(dir);
      std::ofstream episodes(dir / "episodes.jsonl", std::ios::binary);
      for (const auto& e : result.episodes) episodes << json(e).dump() << "\n";
      const json summary = {{"accuracy", result.accuracy},
                            {"valid", result.valid},
                            {"invalid", result.invalid},
                            {"ways", c.ways},
                            {"shots", c.inner_shots},
                            {"repeats", c.repeats},
                            {"style", *style}};
      write_json(dir / "summary.json", summary);
      snapshot(dir / "run.json", "classify", *sub, seed);
      out << summary.dump() << "\n";
    };
  });
}

void add_eval(CLI::App& app, std::uint64_t& seed, std::ostream& out, Action& action) {
  auto* sub = app.add_subcommand("eval", "Reconstruction, semantic and utilization report");
  auto ckpt = std::make_shared<std::string>();
  auto split = std::make_shared<std::string>("validation");
  auto beat_layers = std::make_shared<int>(2);
  auto limit = std::make_shared<int>(0);
  auto output = std::make_shared<std::string>();
  auto classify_episodes = std::make_shared<int>(0);
  sub->add_option("--ckpt", *ckpt, "Trained checkpoint")->required()->check(CLI::ExistingFile);
  sub->add_option("--split", *split, "Split to evaluate")
      ->check(CLI::IsMember({"train", "validation"}))
      ->capture_default_str();
  sub->add_option("--beat-layers", *beat_layers, "Layers compared with the vocabulary mean")
      ->capture_default_str();
  sub->add_option("--limit", *limit, "Evaluate N evenly spaced images (0 = all)");
  sub->add_option("--classify-episodes", *classify_episodes,
                  "Also run 2-way 1-shot oracle classification");
  sub->add_option("--out", *output, "Report JSON")->required();
  sub->callback([=, &seed, &out, &action] {
    action = [=, &seed, &out] {
      Session s(*ckpt);
      Dataset data = s.split(*split);
      if (*limit > 0 && static_cast<std::size_t>(*limit) < data.size()) {
        Dataset subset;
        for (int i = 0; i < *limit; ++i) {
          subset.samples.push_back(data.samples[data.size() * i / *limit]);
        }
        data = std::move(subset);
      }
      auto report = evaluate_tokenizer(*s.tokenizer, data, s.semantic(), *beat_layers);
      if (*classify_episodes > 0) {
        FewShotConfig c;
        c.episodes = *classify_episodes;
        c.seed = seed;
        OracleLLM oracle(s.tokenizer->codebook(), {.seed = seed});
        auto& tok = *s.tokenizer;
        const SpaeFn spae = [&tok](const ImageSample& sample) {
          return tok.to_string(tok.encode(sample.image), 2);
        };
        report.task_accuracies["classify_2way_1shot_oracle"] =
            few_shot_classify(c, data, s.class_names(), oracle, spae).accuracy;
      }
      const json j = report;
      write_json(*output, j);
      snapshot(snapshot_beside(*output), "eval", *sub, seed);
      out << j.dump() << "\n";
    };
  });
}

void add_viz(CLI::App& app, std::uint64_t& seed, std::ostream& out, Action& action) {
  auto* sub = app.add_subcommand("viz", "Render a token pyramid as SVG");
  auto ckpt = std::make_shared<std::string>();
  auto source = std::make_shared<ImageSource>();
  auto output = std::make_shared<std::string>();
  sub->add_option("--ckpt", *ckpt, "Trained checkpoint")->required()->check(CLI::ExistingFile);
  source->add(sub);
  sub->add_option("--out", *output, "Output SVG")->required();
  sub->callback([=, &seed, &out, &action] {
    action = [=, &seed, &out] {
      Session s(*ckpt);
      const auto sample = source->load(s);
      if (sample.label < 0) throw InvalidArgument("viz needs a labeled image; use --index");
      const auto pyramid = s.tokenizer->encode(sample.image);
      const auto profile =
          similarity_profile(s.semantic().image_embed(sample), s.tokenizer->codebook());
      if (fs::path(*output).has_parent_path()) fs::create_directories(fs::path(*output).parent_path());
      visualize_pyramid(pyramid, s.tokenizer->codebook(), profile, *output);
      snapshot(snapshot_beside(*output), "viz", *sub, seed);
      out << json{{"svg", *output}}.dump() << "\n";
    };
  });
}

void report_error(std::ostream& err, const std::string& kind, const std::string& message) {
  err << json{{"error", kind}, {"message", message}}.dump() << "\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app("Lexical token pyramid tokenizer and in-context generation tools", "lexpyr");
  app.require_subcommand(1, 1);
  app.fallthrough();
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "Seed for every random choice")->capture_default_str();
  Action action;
  add_train(app, seed, out, action);
  add_codebook(app, seed, out, action);
  add_tokenize(app, seed, out, action);
  add_reconstruct(app, seed, out, action);
  add_corrupt(app, seed, out, action);
  add_prompt(app, seed, out, action);
  add_decode(app, seed, out, action);
  add_classify(app, seed, out, action);
  add_eval(app, seed, out, action);
  add_viz(app, seed, out, action);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    out << sub->help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    report_error(err, "usage", e.what());
    return kExitUsage;
  }
  try {
    action();
  } catch (const UsageError& e) {
    report_error(err, "usage", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    report_error(err, "runtime", e.what());
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace lexpyr::cli
