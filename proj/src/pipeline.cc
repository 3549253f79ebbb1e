// Copyright 2026 The Refine Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "refine/pipeline.h"

#include <chrono>
#include <set>

#include "refine/corpus.h"
#include "refine/errorbook.h"
#include "refine/feedback.h"
#include "refine/harness.h"
#include "refine/http_providers.h"

namespace refine {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void RejectUnknownKeys(const json& j, const std::set<std::string>& allowed,
                       const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) throw ValidationError("unknown key '" + key + "' in " + where);
  }
}

fs::path Resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  const fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

ProviderConfig ProviderFromJson(const json& j, const fs::path& base, const std::string& role) {
  RejectUnknownKeys(j, {"model_id", "endpoint", "fixture", "api_key_env", "dim",
                        "max_output_tokens"},
                    "providers." + role);
  ProviderConfig p;
  p.model_id = j.value("model_id", std::string());
  p.endpoint = j.value("endpoint", std::string());
  p.fixture = Resolve(base, j.value("fixture", std::string()));
  p.api_key_env = j.value("api_key_env", std::string());
  p.dim = j.value("dim", std::size_t{0});
  p.max_output_tokens = j.value("max_output_tokens", 1024);
  return p;
}

ordered_json ProviderToJson(const ProviderConfig& p) {
  ordered_json j;
  j["model_id"] = p.model_id;
  if (!p.endpoint.empty()) j["endpoint"] = p.endpoint;
  if (!p.fixture.empty()) j["fixture"] = p.fixture.string();
  if (!p.api_key_env.empty()) j["api_key_env"] = p.api_key_env;
  if (p.dim != 0) j["dim"] = p.dim;
  j["max_output_tokens"] = p.max_output_tokens;
  return j;
}

void ValidateProvider(const ProviderConfig& p, const std::string& role) {
  if (!p.configured()) return;
  if (p.endpoint.empty() == p.fixture.empty()) {
    throw ValidationError("provider '" + role + "' needs exactly one of endpoint / fixture");
  }
  if (p.model_id.empty()) throw ValidationError("provider '" + role + "' needs a model_id");
}

const ProviderConfig& Require(const ProviderConfig& p, const std::string& role) {
  if (!p.configured()) throw UsageError("this command needs a '" + role + "' provider");
  ValidateProvider(p, role);
  return p;
}

std::string AblationList(const AblationFlags& f) {
  std::string out;
  const auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += ',';
    out += name;
  };
  add(f.self_reg, "self_reg");
  add(f.cluster_level, "cluster");
  add(f.cot, "cot");
  return out;
}

std::string MediaTypeOf(const Sample& s) {
  return s.image.media_type.empty() ? GuessMediaType(s.image.path) : s.image.media_type;
}

double MsSince(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

// Providers and clients for one command.
class Wiring {
 public:
  explicit Wiring(const RunConfig& config) : config_(config) {
    policy_.max_retries = config.max_retries;
  }

  ModelHandle Chat(const ProviderConfig& pc, const std::string& role, const char* key_env) {
    Require(pc, role);
    std::shared_ptr<ChatProvider> provider;
    if (!pc.fixture.empty()) {
      provider = MockChatProvider::FromFile(pc.fixture);
    } else {
      provider = std::make_shared<HttpChatProvider>(
          pc.endpoint, ApiKeyFromEnv(pc.api_key_env.empty() ? key_env : pc.api_key_env));
    }
    clients_.push_back(
        std::make_unique<ChatClient>(std::move(provider), policy_, config_.max_concurrency));
    ModelHandle h;
    h.client = clients_.back().get();
    h.model_id = pc.model_id;
    h.max_output_tokens = pc.max_output_tokens;
    h.temperature = 0.0;
    return h;
  }

  EmbeddingClient& Embedder() {
    if (embedder_) return *embedder_;
    const ProviderConfig& pc = Require(config_.embedder, "embedder");
    if (pc.dim == 0) throw ValidationError("the embedder provider needs a positive dim");
    std::shared_ptr<EmbeddingProvider> provider;
    if (!pc.fixture.empty()) {
      provider = MockEmbeddingProvider::FromFile(pc.fixture);
    } else {
      provider = std::make_shared<HttpEmbeddingProvider>(
          pc.endpoint, pc.model_id,
          ApiKeyFromEnv(pc.api_key_env.empty() ? kEmbedKeyEnv : pc.api_key_env));
    }
    embedder_ = std::make_unique<EmbeddingClient>(
        std::move(provider), pc.model_id, pc.dim,
        std::make_shared<ContentStore>(config_.cache_dir), policy_, config_.max_concurrency);
    return *embedder_;
  }

 private:
  const RunConfig& config_;
  RetryPolicy policy_;
  std::vector<std::unique_ptr<ChatClient>> clients_;
  std::unique_ptr<EmbeddingClient> embedder_;
};

struct LoadedCorpus {
  std::vector<Sample> samples;
  Split split;
};

LoadedCorpus LoadSplit(const RunConfig& config) {
  if (config.corpus.empty()) throw UsageError("no corpus given");
  LoadedCorpus c;
  c.samples = LoadCorpus(config.corpus);
  c.split = SplitCorpus(c.samples, config.fraction, config.split_seed);
  return c;
}

std::vector<std::string> IdsOf(const LoadedCorpus& corpus, SplitPart part) {
  switch (part) {
    case SplitPart::kTrain: return corpus.split.train_ids;
    case SplitPart::kTest: return corpus.split.test_ids;
    case SplitPart::kAll: break;
  }
  std::vector<std::string> ids;
  for (const Sample& s : corpus.samples) ids.push_back(s.id);
  return ids;
}

std::vector<std::string> Limited(std::vector<std::string> ids, std::optional<std::size_t> limit) {
  if (limit && ids.size() > *limit) ids.resize(*limit);
  return ids;
}

const char* SplitPartName(SplitPart part) {
  switch (part) {
    case SplitPart::kTrain: return "train";
    case SplitPart::kTest: return "test";
    case SplitPart::kAll: break;
  }
  return "all";
}

ordered_json Snapshot(const RunConfig& config, const std::string& command,
                      const ordered_json& extra) {
  ordered_json j = RunConfigToJson(config);
  j["command"] = command;
  for (const auto& [k, v] : extra.items()) j[k] = v;
  return j;
}

ClusterModel LoadClusters(const fs::path& dir) {
  const fs::path p = dir / "clusters.json";
  if (!fs::exists(p)) {
    throw UsageError("no cluster model at " + p.string() +
                     " (build needs at least k task/process entries)");
  }
  try {
    return ClusterModelFromJson(json::parse(ReadFile(p)));
  } catch (const json::exception& e) {
    throw ValidationError(p.string() + ": " + e.what());
  }
}

std::vector<ClusterPrinciple> LoadPrinciples(const fs::path& dir) {
  const fs::path p = dir / "principles.jsonl";
  if (!fs::exists(p)) throw UsageError("no cluster principles at " + p.string());
  return ParsePrinciples(ReadFile(p));
}

}  // namespace

void RunConfig::Validate() const {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ValidationError("split fraction must lie in (0, 1)");
  if (max_concurrency < 1) throw ValidationError("max_concurrency must be >= 1");
  if (max_retries < 0) throw ValidationError("max_retries must be >= 0");
  if (kmeans_k < 1 || kmeans_max_iters < 1) throw ValidationError("kmeans k and max_iters must be >= 1");
  ValidateProvider(student, "student");
  ValidateProvider(teacher, "teacher");
  ValidateProvider(embedder, "embedder");
  ResolvedStrategy();
}

Strategy RunConfig::ResolvedStrategy() const {
  Strategy s = ParseStrategy(strategy);
  if (ablate.self_reg || ablate.cluster_level || ablate.cot) {
    if (s.kind != StrategyKind::kRefine) {
      throw UsageError("ablation components only apply to the refine strategy");
    }
    s.ablation.self_reg = s.ablation.self_reg || ablate.self_reg;
    s.ablation.cluster_level = s.ablation.cluster_level || ablate.cluster_level;
    s.ablation.cot = s.ablation.cot || ablate.cot;
  }
  if (s.kind == StrategyKind::kRefine) s = ComposeStrategy(s.ablation);
  return s;
}

RunConfig RunConfigFromJson(const json& j, const fs::path& base_dir) {
  RejectUnknownKeys(j, {"corpus", "image_dir", "split", "providers", "strategy", "ablate",
                        "max_concurrency", "max_retries", "out", "cache_dir", "limit", "kmeans",
                        "principles", "ricp"},
                    "config");
  try {
    RunConfig c;
    c.corpus = Resolve(base_dir, j.value("corpus", std::string()));
    c.image_dir = Resolve(base_dir, j.value("image_dir", std::string()));
    if (j.contains("split")) {
      const json& s = j["split"];
      RejectUnknownKeys(s, {"fraction", "seed"}, "split");
      c.fraction = s.value("fraction", c.fraction);
      c.split_seed = s.value("seed", c.split_seed);
    }
    if (j.contains("providers")) {
      const json& p = j["providers"];
      RejectUnknownKeys(p, {"student", "teacher", "embedder"}, "providers");
      if (p.contains("student")) c.student = ProviderFromJson(p["student"], base_dir, "student");
      if (p.contains("teacher")) c.teacher = ProviderFromJson(p["teacher"], base_dir, "teacher");
      if (p.contains("embedder")) {
        c.embedder = ProviderFromJson(p["embedder"], base_dir, "embedder");
      }
    }
    c.strategy = j.value("strategy", c.strategy);
    if (j.contains("ablate")) {
      const json& a = j["ablate"];
      if (a.is_array()) {
        for (const json& item : a) {
          const AblationFlags f = ParseAblation(item.get<std::string>());
          c.ablate.self_reg |= f.self_reg;
          c.ablate.cluster_level |= f.cluster_level;
          c.ablate.cot |= f.cot;
        }
      } else {
        c.ablate = ParseAblation(a.get<std::string>());
      }
    }
    c.max_concurrency = j.value("max_concurrency", c.max_concurrency);
    c.max_retries = j.value("max_retries", c.max_retries);
    c.out = Resolve(base_dir, j.value("out", std::string("out")));
    c.cache_dir = Resolve(base_dir, j.value("cache_dir", std::string()));
    if (j.contains("limit") && !j["limit"].is_null()) c.limit = j["limit"].get<std::size_t>();
    if (j.contains("kmeans")) {
      const json& k = j["kmeans"];
      RejectUnknownKeys(k, {"k", "seed", "max_iters"}, "kmeans");
      c.kmeans_k = k.value("k", c.kmeans_k);
      c.kmeans_seed = k.value("seed", c.kmeans_seed);
      c.kmeans_max_iters = k.value("max_iters", c.kmeans_max_iters);
    }
    if (j.contains("principles")) {
      RejectUnknownKeys(j["principles"], {"seed"}, "principles");
      c.principle_seed = j["principles"].value("seed", c.principle_seed);
    }
    if (j.contains("ricp")) {
      const json& r = j["ricp"];
      RejectUnknownKeys(r, {"candidates", "groups", "seed", "max_iters"}, "ricp");
      c.ricp.candidates = r.value("candidates", c.ricp.candidates);
      c.ricp.groups = r.value("groups", c.ricp.groups);
      c.ricp.seed = r.value("seed", c.ricp.seed);
      c.ricp.max_iters = r.value("max_iters", c.ricp.max_iters);
    }
    return c;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad config: ") + e.what());
  }
}

RunConfig LoadRunConfig(const fs::path& path) {
  json j;
  try {
    j = json::parse(ReadFile(path));
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": malformed JSON: " + e.what());
  }
  RunConfig c = RunConfigFromJson(j, fs::absolute(path).parent_path());
  c.Validate();
  return c;
}

ordered_json RunConfigToJson(const RunConfig& c) {
  ordered_json j;
  j["corpus"] = c.corpus.string();
  j["image_dir"] = c.image_dir.string();
  j["split"] = {{"fraction", c.fraction}, {"seed", c.split_seed}};
  ordered_json providers = ordered_json::object();
  if (c.student.configured()) providers["student"] = ProviderToJson(c.student);
  if (c.teacher.configured()) providers["teacher"] = ProviderToJson(c.teacher);
  if (c.embedder.configured()) providers["embedder"] = ProviderToJson(c.embedder);
  j["providers"] = std::move(providers);
  j["strategy"] = c.strategy;
  j["ablate"] = AblationList(c.ablate);
  j["max_concurrency"] = c.max_concurrency;
  j["max_retries"] = c.max_retries;
  j["out"] = c.out.string();
  j["cache_dir"] = c.cache_dir.string();
  j["limit"] = c.limit ? ordered_json(*c.limit) : ordered_json(nullptr);
  j["kmeans"] = {{"k", c.kmeans_k}, {"seed", c.kmeans_seed}, {"max_iters", c.kmeans_max_iters}};
  j["principles"] = {{"seed", c.principle_seed}};
  j["ricp"] = {{"candidates", c.ricp.candidates},
               {"groups", c.ricp.groups},
               {"seed", c.ricp.seed},
               {"max_iters", c.ricp.max_iters}};
  return j;
}

std::vector<Sample> IngestCorpus(const std::string& raw_jsonl, std::optional<std::size_t> limit) {
  std::vector<Sample> samples;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  for (const std::string& line : SplitLines(raw_jsonl)) {
    ++line_no;
    if (limit && samples.size() >= *limit) break;
    if (Trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(line_no, std::string("malformed JSON: ") + e.what());
    }
    Sample s;
    try {
      s = SampleFromRawJson(j);
    } catch (const ValidationError& e) {
      throw ParseError(line_no, e.what());
    }
    if (!seen.insert(s.id).second) throw ParseError(line_no, "duplicate sample id '" + s.id + "'");
    samples.push_back(std::move(s));
  }
  return samples;
}

void CmdIngest(const fs::path& input, const fs::path& output, std::optional<std::size_t> limit) {
  const std::vector<Sample> samples = IngestCorpus(ReadFile(input), limit);
  WriteFile(output, SerializeCorpus(samples));
  LogInfo("ingested " + std::to_string(samples.size()) + " samples into " + output.string());
}

BuildResult CmdBuild(const RunConfig& config, std::optional<fs::path> book_path, SplitPart part) {
  config.Validate();
  const LoadedCorpus corpus = LoadSplit(config);
  const CorpusIndex index(corpus.samples);
  const fs::path image_dir = config.image_dir.empty() ? config.corpus.parent_path() : config.image_dir;
  const fs::path book_file = book_path ? *book_path : config.out / "book.refb";
  const fs::path dir = book_file.parent_path();

  Wiring wiring(config);
  const ModelHandle student = wiring.Chat(config.student, "student", kStudentKeyEnv);
  const ModelHandle teacher = wiring.Chat(config.teacher, "teacher", kTeacherKeyEnv);
  EmbeddingClient& embedder = wiring.Embedder();

  BuildResult result;
  result.book_path = book_file;

  // Errors under standard prompting on the train split.
  Strategy standard;
  const std::vector<std::string> train = Limited(IdsOf(corpus, part), config.limit);
  EvalOptions eval_options{image_dir, config.max_concurrency};
  std::vector<Prediction> predictions =
      EvaluateSplit(train, index, standard, student, nullptr, eval_options);
  WriteFile(dir / "train_predictions.jsonl", SerializePredictions(predictions));
  std::vector<Prediction> answered;
  for (const Prediction& p : predictions) {
    if (p.raw_output.rfind(kFailedOutputPrefix, 0) == 0) {
      LogWarning("skipping '" + p.sample_id + "': student call failed");
      continue;
    }
    answered.push_back(p);
  }
  const std::vector<ErrorCase> errors = CollectErrors(answered, index);
  result.errors = errors.size();
  LogInfo("train pass@1 " + std::to_string(PassAt1(predictions)) + ", " +
          std::to_string(errors.size()) + " errors");

  // Feedback and classification; per-error results keep the output order
  // independent of scheduling.
  std::vector<std::optional<StructuredFeedback>> classified(errors.size());
  std::vector<std::vector<TeacherExchange>> exchanges(errors.size());
  ParallelFor(errors.size(), config.max_concurrency, [&](std::size_t i) {
    const Sample& s = index.At(errors[i].sample_id);
    const std::string image = ReadImageBytes(errors[i].image, image_dir);
    std::optional<StructuredFeedback> fb =
        GenerateFeedback(errors[i], image, MediaTypeOf(s), teacher, &exchanges[i]);
    if (fb) classified[i] = ClassifyFeedback(std::move(*fb), teacher, &exchanges[i]);
  });
  AuditLog audit;
  std::vector<StructuredFeedback> all;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    audit.Append(std::move(exchanges[i]));
    if (classified[i]) all.push_back(std::move(*classified[i]));
  }
  result.feedback_parsed = all.size();
  WriteFile(dir / "feedback.jsonl", SerializeFeedback(all));

  const std::vector<StructuredFeedback> task = FilterFeedback(all);
  std::vector<StructuredFeedback> self;
  for (const StructuredFeedback& fb : all) {
    if (fb.category == FeedbackCategory::kSelfRegulatory) self.push_back(fb);
  }
  result.task_process = task.size();
  result.self_regulatory = self.size();

  std::vector<std::string> dropped;
  const ErrorBook book = BuildErrorBook(task, index, image_dir, embedder, &dropped);
  SaveErrorBook(book, book_file);
  WriteFile(dir / "book.json", ErrorBookToJson(book).dump(2) + "\n");
  const ErrorBook selfreg =
      BuildErrorBook(self, index, image_dir, embedder, nullptr, FeedbackCategory::kSelfRegulatory);
  SaveErrorBook(selfreg, dir / "selfreg.refb");
  result.book_entries = book.size();

  if (book.size() >= static_cast<std::size_t>(config.kmeans_k)) {
    // Unit vectors make squared Euclidean rank-equivalent to cosine.
    std::vector<LabeledPoint> points;
    points.reserve(book.size());
    for (const ErrorBookEntry& e : book.entries()) {
      points.push_back({e.sample_id, Normalized(e.embedding)});
    }
    const ClusterModel model =
        KMeans(points, config.kmeans_k, config.kmeans_seed, config.kmeans_max_iters);
    std::vector<StructuredFeedback> members;
    for (const ErrorBookEntry& e : book.entries()) members.push_back(e.feedback);
    std::vector<TeacherExchange> principle_calls;
    const std::vector<ClusterPrinciple> principles =
        GenerateClusterFeedback(model, members, teacher, config.principle_seed, &principle_calls);
    audit.Append(std::move(principle_calls));
    WriteFile(dir / "clusters.json", ClusterModelToJson(model).dump(2) + "\n");
    WriteFile(dir / "principles.jsonl", SerializePrinciples(principles));
    result.clusters = principles.size();
  } else {
    LogInfo("skipping clusters: " + std::to_string(book.size()) + " entries < k=" +
            std::to_string(config.kmeans_k));
    fs::remove(dir / "clusters.json");
    fs::remove(dir / "principles.jsonl");
  }

  const std::string audit_text = audit.Serialize();
  WriteFile(dir / "audit.jsonl", audit_text);
  result.teacher_calls = audit.Entries().size();
  WriteFile(dir / "resolved_config.json",
            Snapshot(config, "build",
                     {{"errorbook", book_file.string()}, {"split_part", SplitPartName(part)}})
                    .dump(2) +
                "\n");
  LogInfo("book " + book_file.string() + ": " + std::to_string(book.size()) + " entries (" +
          std::to_string(self.size()) + " self-regulatory filtered, " +
          std::to_string(dropped.size()) + " duplicates dropped)");
  return result;
}

SplitPart ParseSplitPart(const std::string& name) {
  if (name == "train") return SplitPart::kTrain;
  if (name == "test") return SplitPart::kTest;
  if (name == "all") return SplitPart::kAll;
  throw UsageError("split must be train, test or all, not '" + name + "'");
}

fs::path TelemetryPathFor(const fs::path& predictions_path) {
  const std::string name = predictions_path.filename().string();
  const std::string prefix = "predictions";
  if (name.rfind(prefix, 0) == 0) {
    return predictions_path.parent_path() / ("telemetry" + name.substr(prefix.size()));
  }
  return predictions_path.parent_path() / (predictions_path.stem().string() + ".telemetry.jsonl");
}

EvalResult CmdEval(const RunConfig& config, const std::optional<fs::path>& book_path,
                   SplitPart part) {
  config.Validate();
  const Strategy strategy = config.ResolvedStrategy();
  if (strategy.ConsumesFeedback() && !book_path) {
    throw UsageError("strategy '" + strategy.Tag() + "' requires --errorbook");
  }
  const LoadedCorpus corpus = LoadSplit(config);
  const CorpusIndex index(corpus.samples);
  const fs::path image_dir = config.image_dir.empty() ? config.corpus.parent_path() : config.image_dir;
  const std::vector<std::string> ids = Limited(IdsOf(corpus, part), config.limit);

  Wiring wiring(config);
  const ModelHandle student = wiring.Chat(config.student, "student", kStudentKeyEnv);

  // Retrieval state; all of it is loaded before the first query.
  std::optional<ErrorBook> book;
  std::optional<ErrorBook> selfreg;
  std::optional<ClusterModel> clusters;
  std::map<int, std::string> principle_text;
  std::optional<RicpRetriever> ricp;
  RetrievalHook hook;
  if (strategy.ConsumesFeedback()) {
    book = LoadErrorBook(*book_path);
    if (book->empty()) throw ValidationError("error-book " + book_path->string() + " is empty");
    const fs::path dir = book_path->parent_path();
    EmbeddingClient& embedder = wiring.Embedder();
    if (embedder.dim() != book->dim() || embedder.model_id() != book->embed_model_id()) {
      throw ValidationError("embedder " + embedder.model_id() + " (dim " +
                            std::to_string(embedder.dim()) + ") does not match the book's " +
                            book->embed_model_id() + " (dim " + std::to_string(book->dim()) + ")");
    }
    const bool wants_clusters = strategy.kind == StrategyKind::kRicp ||
                                (strategy.kind == StrategyKind::kRefine &&
                                 strategy.ablation.cluster_level);
    std::vector<ClusterPrinciple> principles;
    if (wants_clusters) {
      clusters = LoadClusters(dir);
      principles = LoadPrinciples(dir);
      for (const ClusterPrinciple& p : principles) {
        if (p.text) principle_text[p.cluster_index] = *p.text;
      }
    }
    if (strategy.kind == StrategyKind::kRefine && strategy.ablation.self_reg) {
      selfreg = LoadErrorBook(dir / "selfreg.refb", FeedbackCategory::kSelfRegulatory);
      if (selfreg->empty()) {
        throw UsageError("self_reg ablation needs self-regulatory items, and " +
                         (dir / "selfreg.refb").string() + " has none");
      }
    }
    if (strategy.kind == StrategyKind::kRicp) {
      ricp.emplace(*book, *clusters, principles, config.ricp);
    }
    hook = [&, strategy](const Sample& s, const std::string& image) {
      Retrieved r;
      bool cached = false;
      const EmbeddingVector query = embedder.Embed(image, MediaTypeOf(s), s.question, &cached);
      r.embedding_calls = cached ? 0 : 1;
      const auto t0 = std::chrono::steady_clock::now();
      switch (strategy.kind) {
        case StrategyKind::kDirect:
          r.attachment.raw_feedback.push_back(
              RenderFeedbackRaw(RetrieveNearest(*book, query).entry->feedback));
          break;
        case StrategyKind::kRicp:
          r.attachment = ricp->Retrieve(query);
          break;
        default: {
          r.attachment.task_process = RetrieveNearest(*book, query).entry->feedback;
          if (selfreg) r.attachment.self_regulatory = RetrieveNearest(*selfreg, query).entry->feedback;
          if (clusters) {
            const auto it = principle_text.find(AssignCluster(*clusters, query));
            if (it != principle_text.end()) r.attachment.cluster_principle = it->second;
          }
          break;
        }
      }
      r.retrieval_ms = MsSince(t0);
      return r;
    };
  }

  EvalResult result;
  result.predictions =
      EvaluateSplit(ids, index, strategy, student, hook, {image_dir, config.max_concurrency});
  for (const Prediction& p : result.predictions) {
    if (p.raw_output.rfind(kFailedOutputPrefix, 0) == 0) ++result.failures;
  }
  const std::string tag = strategy.Tag();
  result.predictions_path = config.out / ("predictions_" + tag + ".jsonl");
  result.telemetry_path = TelemetryPathFor(result.predictions_path);
  WriteFile(result.predictions_path, SerializePredictions(result.predictions));
  WriteFile(result.telemetry_path, SerializeTelemetry(result.predictions));
  ordered_json extra;
  extra["resolved_strategy"] = tag;
  extra["errorbook"] = book_path ? ordered_json(book_path->string()) : ordered_json(nullptr);
  extra["split_part"] = SplitPartName(part);
  WriteFile(config.out / "resolved_config.json", Snapshot(config, "eval", extra).dump(2) + "\n");
  LogInfo(tag + ": pass@1 " + std::to_string(PassAt1(result.predictions)) + " over " +
          std::to_string(result.predictions.size()) + " samples -> " +
          result.predictions_path.string());
  return result;
}

ReportResult CmdReport(const std::vector<fs::path>& prediction_files, const fs::path& corpus,
                       const fs::path& out_dir, const std::optional<std::string>& reference) {
  if (prediction_files.empty()) throw UsageError("report needs at least one predictions file");
  const std::vector<Sample> samples = LoadCorpus(corpus);
  const CorpusIndex index(samples);
  ReportResult result;
  for (const fs::path& file : prediction_files) {
    std::vector<Prediction> predictions = ParsePredictions(ReadFile(file));
    const fs::path sidecar = TelemetryPathFor(file);
    if (fs::exists(sidecar)) {
      MergeTelemetry(ReadFile(sidecar), predictions);
    } else {
      LogWarning("no telemetry sidecar for " + file.string() + "; call counts read as zero");
    }
    result.reports.push_back(Score(predictions, index));
  }
  if (reference) result.comparison = Compare(result.reports, *reference);
  EmitReports(result.reports, out_dir / "report.json", ReportFormat::kJson);
  EmitReports(result.reports, out_dir / "report.csv", ReportFormat::kCsv);
  if (result.comparison) {
    EmitComparison(*result.comparison, out_dir / "comparison.json", ReportFormat::kJson);
    EmitComparison(*result.comparison, out_dir / "comparison.csv", ReportFormat::kCsv);
  }
  return result;
}

int ExitCodeFor(std::exception_ptr error) {
  if (!error) return 0;
  try {
    std::rethrow_exception(error);
  } catch (const ProviderError&) {
    return 2;
  } catch (const IoError&) {
    return 3;
  } catch (const fs::filesystem_error&) {
    return 3;
  } catch (...) {
    return 1;
  }
}

}  // namespace refine
