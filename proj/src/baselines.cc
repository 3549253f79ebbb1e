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

#include "refine/baselines.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace refine {

namespace {

using Matrix = std::vector<std::vector<double>>;

double SqDist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

// Nearest centroid, ties to the lower index.
int Nearest(const std::vector<double>& x, const Matrix& centroids, double* dist) {
  int best = 0;
  double best_d = SqDist(x, centroids[0]);
  for (std::size_t c = 1; c < centroids.size(); ++c) {
    const double d = SqDist(x, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  if (dist != nullptr) *dist = best_d;
  return best;
}

Matrix SeedPlusPlus(const Matrix& x, int k, SplitMix64& rng) {
  const std::size_t n = x.size();
  Matrix centers;
  std::vector<bool> chosen(n, false);
  std::size_t first = static_cast<std::size_t>(rng.Below(n));
  centers.push_back(x[first]);
  chosen[first] = true;
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = SqDist(x[i], x[first]);
  while (static_cast<int>(centers.size()) < k) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::size_t pick = n;
    if (total > 0.0) {
      const double r = rng.NextDouble() * total;
      double cum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        cum += d2[i];
        pick = i;
        if (cum > r) break;
      }
    } else {
      // Every remaining point coincides with a center.
      for (std::size_t i = 0; i < n && pick == n; ++i) {
        if (!chosen[i]) pick = i;
      }
    }
    centers.push_back(x[pick]);
    chosen[pick] = true;
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], SqDist(x[i], x[pick]));
  }
  return centers;
}

// Assigns every point, then repairs empty clusters. Returns the SSE.
double AssignAndRepair(const Matrix& x, Matrix& centroids, std::vector<int>& assign) {
  const std::size_t n = x.size();
  const int k = static_cast<int>(centroids.size());
  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) assign[i] = Nearest(x[i], centroids, &dist[i]);

  for (std::size_t guard = 0; guard <= n; ++guard) {
    std::vector<int> sizes(static_cast<std::size_t>(k), 0);
    for (int a : assign) ++sizes[static_cast<std::size_t>(a)];
    const auto empty = std::find(sizes.begin(), sizes.end(), 0);
    if (empty == sizes.end()) break;
    const int c = static_cast<int>(empty - sizes.begin());
    // Farthest point from its own centroid among clusters that can spare one.
    std::size_t far = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (sizes[static_cast<std::size_t>(assign[i])] < 2) continue;
      if (far == n || dist[i] > dist[far]) far = i;
    }
    centroids[static_cast<std::size_t>(c)] = x[far];
    if (dist[far] == 0.0) {
      // Duplicate points: a fresh assignment would hand the point back to a
      // lower-index twin centroid, so move it explicitly.
      assign[far] = c;
      dist[far] = 0.0;
      continue;
    }
    for (std::size_t i = 0; i < n; ++i) assign[i] = Nearest(x[i], centroids, &dist[i]);
  }
  return std::accumulate(dist.begin(), dist.end(), 0.0);
}

}  // namespace

EmbeddingVector Normalized(const EmbeddingVector& v) {
  double ss = 0.0;
  for (float x : v.values) ss += static_cast<double>(x) * static_cast<double>(x);
  if (ss == 0.0) throw ValidationError("cannot normalize a zero vector");
  const double inv = 1.0 / std::sqrt(ss);
  EmbeddingVector out;
  out.values.reserve(v.values.size());
  for (float x : v.values) out.values.push_back(static_cast<float>(x * inv));
  return out;
}

double ClusterSse(const std::vector<LabeledPoint>& points, const ClusterModel& model) {
  double sse = 0.0;
  for (const LabeledPoint& p : points) {
    const auto it = model.assignments.find(p.id);
    if (it == model.assignments.end()) throw ValidationError("point '" + p.id + "' is unassigned");
    const EmbeddingVector& c = model.centroids[static_cast<std::size_t>(it->second)];
    for (std::size_t i = 0; i < p.vector.values.size(); ++i) {
      const double d = static_cast<double>(p.vector.values[i]) - static_cast<double>(c.values[i]);
      sse += d * d;
    }
  }
  return sse;
}

namespace {

// Lloyd iterations from the given centroids until the assignment is stable or
// `max_iters` assignment steps have run. Returns the final SSE.
double Lloyd(const Matrix& x, Matrix& centroids, std::vector<int>& assign, int max_iters,
             std::vector<double>& trace) {
  const std::size_t k = centroids.size();
  const std::size_t dim = x.front().size();
  std::vector<int> previous;
  for (int iter = 0;; ++iter) {
    const double sse = AssignAndRepair(x, centroids, assign);
    trace.push_back(sse);
    if (assign == previous || iter + 1 >= max_iters) return sse;
    previous = assign;
    // Update step: every cluster is non-empty after the repair.
    Matrix sums(k, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const auto c = static_cast<std::size_t>(assign[i]);
      ++counts[c];
      for (std::size_t d = 0; d < dim; ++d) sums[c][d] += x[i][d];
    }
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t d = 0; d < dim; ++d) {
        centroids[c][d] = sums[c][d] / static_cast<double>(counts[c]);
      }
    }
  }
}

}  // namespace

ClusterModel KMeans(const std::vector<LabeledPoint>& points, int k, std::uint64_t seed,
                    int max_iters, std::vector<double>* sse_trace, int restarts) {
  if (k < 1) throw ValidationError("k-means needs k >= 1");
  if (max_iters < 1) throw ValidationError("k-means needs max_iters >= 1");
  if (restarts < 1) throw ValidationError("k-means needs restarts >= 1");
  if (points.size() < static_cast<std::size_t>(k)) {
    throw ValidationError("k-means needs at least k=" + std::to_string(k) + " points, got " +
                          std::to_string(points.size()));
  }
  const std::size_t dim = points.front().vector.dim();
  if (dim == 0) throw ValidationError("k-means over zero-dimensional points");
  Matrix x;
  x.reserve(points.size());
  for (const LabeledPoint& p : points) {
    if (p.vector.dim() != dim) throw ValidationError("k-means points have mixed dims");
    x.emplace_back(p.vector.values.begin(), p.vector.values.end());
  }

  // Restarts draw their seedings from one stream; the lowest final SSE wins,
  // ties to the earlier restart.
  SplitMix64 rng(seed);
  Matrix centroids;
  std::vector<int> assign;
  double best_sse = 0.0;
  for (int run = 0; run < restarts; ++run) {
    Matrix c = SeedPlusPlus(x, k, rng);
    std::vector<int> a(x.size(), -1);
    std::vector<double> trace;
    const double sse = Lloyd(x, c, a, max_iters, trace);
    if (run == 0 || sse < best_sse) {
      best_sse = sse;
      centroids = std::move(c);
      assign = std::move(a);
      if (sse_trace != nullptr) *sse_trace = std::move(trace);
    }
  }

  ClusterModel model;
  model.k = k;
  model.seed = seed;
  model.dim = dim;
  for (const auto& c : centroids) {
    EmbeddingVector v;
    v.values.reserve(dim);
    for (double d : c) v.values.push_back(static_cast<float>(d));
    model.centroids.push_back(std::move(v));
  }
  for (std::size_t i = 0; i < points.size(); ++i) model.assignments[points[i].id] = assign[i];
  return model;
}

int AssignCluster(const ClusterModel& model, const EmbeddingVector& query) {
  if (query.dim() != model.dim) {
    throw ValidationError("query dim " + std::to_string(query.dim()) + " != cluster dim " +
                          std::to_string(model.dim));
  }
  int best = -1;
  double best_sim = 0.0;
  for (std::size_t c = 0; c < model.centroids.size(); ++c) {
    if (model.centroids[c].AllZero()) continue;
    const double sim = CosineSimilarity(query, model.centroids[c]);
    if (best < 0 || sim > best_sim) {
      best = static_cast<int>(c);
      best_sim = sim;
    }
  }
  if (best < 0) throw ValidationError("cluster model has no usable centroid");
  return best;
}

std::vector<Message> RenderPrinciplePrompt(int cluster_index,
                                           const std::vector<const StructuredFeedback*>& sources,
                                           bool strict) {
  Message system;
  system.role = Role::kSystem;
  system.parts.push_back(ContentPart::Text(
      "You are an expert teacher. You will see feedback written for several mistakes that a "
      "vision-language student model made on similar questions. Write one generalized "
      "principle that captures the guidance they share and would help on new questions of "
      "this kind."));
  std::string user = "Feedback samples from cluster " + std::to_string(cluster_index) + ":\n";
  for (std::size_t i = 0; i < sources.size(); ++i) {
    user += "\n[" + std::to_string(i + 1) + "]\n" + RenderFeedbackTriple(*sources[i]) + "\n";
  }
  user += "\nReply with a single line starting with \"PRINCIPLE:\" followed by the generalized "
          "principle.";
  if (strict) user += " Do not write anything else.";
  Message m;
  m.role = Role::kUser;
  m.parts.push_back(ContentPart::Text(std::move(user)));
  return {std::move(system), std::move(m)};
}

namespace {

std::optional<std::string> ParsePrinciple(const std::string& response) {
  std::string text = Trim(response);
  const std::string upper = ToUpper(text.substr(0, 10));
  if (upper.rfind("PRINCIPLE:", 0) == 0) text = Trim(text.substr(10));
  if (text.empty()) return std::nullopt;
  return text;
}

}  // namespace

std::vector<ClusterPrinciple> GenerateClusterFeedback(
    const ClusterModel& model, const std::vector<StructuredFeedback>& feedbacks,
    const ModelHandle& teacher, std::uint64_t seed, std::vector<TeacherExchange>* audit,
    std::size_t sample_size) {
  std::vector<std::vector<const StructuredFeedback*>> members(static_cast<std::size_t>(model.k));
  for (const StructuredFeedback& fb : feedbacks) {
    if (fb.category != FeedbackCategory::kTaskProcess) {
      throw ValidationError("cluster principles take task/process feedback only ('" +
                            fb.sample_id + "')");
    }
    const auto it = model.assignments.find(fb.sample_id);
    if (it == model.assignments.end()) {
      throw ValidationError("feedback sample '" + fb.sample_id + "' has no cluster assignment");
    }
    members[static_cast<std::size_t>(it->second)].push_back(&fb);
  }

  std::vector<ClusterPrinciple> out;
  for (int c = 0; c < model.k; ++c) {
    auto& pool = members[static_cast<std::size_t>(c)];
    if (pool.empty()) continue;
    // Stream per cluster so one cluster's size cannot shift another's sample.
    SplitMix64 rng(seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(c + 1)));
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), 0);
    SeededShuffle(order, rng);
    order.resize(std::min(sample_size, order.size()));
    std::sort(order.begin(), order.end());
    std::vector<const StructuredFeedback*> sources;
    ClusterPrinciple principle;
    principle.cluster_index = c;
    for (std::size_t i : order) {
      sources.push_back(pool[i]);
      principle.source_ids.push_back(pool[i]->sample_id);
    }
    for (int attempt = 0; attempt < 2 && !principle.text; ++attempt) {
      TeacherExchange ex;
      ex.sample_id = "cluster:" + std::to_string(c);
      ex.purpose = attempt == 0 ? "principle" : "principle_retry";
      ex.prompt = RenderPrinciplePrompt(c, sources, attempt > 0);
      try {
        ChatResponse r = teacher.Ask(ex.prompt);
        ex.raw_response = r.text;
        ex.usage = r.usage;
        principle.text = ParsePrinciple(r.text);
        if (!principle.text) ex.error = "empty principle";
      } catch (const ProviderError& e) {
        ex.error = e.what();
      }
      if (audit != nullptr) audit->push_back(std::move(ex));
    }
    if (!principle.text) LogWarning("cluster " + std::to_string(c) + " has no principle");
    out.push_back(std::move(principle));
  }
  return out;
}

Strategy ComposeStrategy(const AblationFlags& flags) {
  if (!flags.task_process) {
    throw ValidationError("task/process feedback is the base of every composed strategy");
  }
  Strategy s;
  s.kind = StrategyKind::kRefine;
  s.ablation = flags;
  return s;
}

nlohmann::ordered_json ClusterModelToJson(const ClusterModel& model) {
  nlohmann::ordered_json j;
  j["k"] = model.k;
  j["seed"] = model.seed;
  j["dim"] = model.dim;
  auto centroids = nlohmann::ordered_json::array();
  for (const EmbeddingVector& c : model.centroids) centroids.push_back(c.values);
  j["centroids"] = std::move(centroids);
  nlohmann::ordered_json assignments = nlohmann::ordered_json::object();
  for (const auto& [id, c] : model.assignments) assignments[id] = c;
  j["assignments"] = std::move(assignments);
  return j;
}

ClusterModel ClusterModelFromJson(const nlohmann::json& j) {
  try {
    ClusterModel m;
    m.k = j.at("k").get<int>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.dim = j.at("dim").get<std::size_t>();
    for (const auto& c : j.at("centroids")) {
      EmbeddingVector v;
      v.values = c.get<std::vector<float>>();
      if (v.dim() != m.dim) throw ValidationError("centroid dim mismatch");
      m.centroids.push_back(std::move(v));
    }
    if (static_cast<int>(m.centroids.size()) != m.k) {
      throw ValidationError("cluster model lists " + std::to_string(m.centroids.size()) +
                            " centroids for k=" + std::to_string(m.k));
    }
    for (const auto& [id, c] : j.at("assignments").items()) {
      const int idx = c.get<int>();
      if (idx < 0 || idx >= m.k) throw ValidationError("assignment of '" + id + "' out of range");
      m.assignments[id] = idx;
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad cluster model: ") + e.what());
  }
}

std::string SerializePrinciples(const std::vector<ClusterPrinciple>& principles) {
  std::string out;
  for (const ClusterPrinciple& p : principles) {
    nlohmann::ordered_json j;
    j["cluster_index"] = p.cluster_index;
    if (p.text) {
      j["text"] = *p.text;
    } else {
      j["text"] = nullptr;
    }
    j["source_ids"] = p.source_ids;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<ClusterPrinciple> ParsePrinciples(const std::string& jsonl) {
  std::vector<ClusterPrinciple> out;
  std::size_t line_no = 0;
  for (const std::string& line : SplitLines(jsonl)) {
    ++line_no;
    if (Trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ClusterPrinciple p;
      p.cluster_index = j.at("cluster_index").get<int>();
      if (!j.at("text").is_null()) p.text = j.at("text").get<std::string>();
      p.source_ids = j.at("source_ids").get<std::vector<std::string>>();
      if (p.source_ids.size() > kPrincipleSampleSize) {
        throw ValidationError("principle summarizes more than 20 sources");
      }
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, std::string("bad principle record: ") + e.what());
    } catch (const ValidationError& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return out;
}

RicpRetriever::RicpRetriever(const ErrorBook& book, const ClusterModel& model,
                             std::vector<ClusterPrinciple> principles, RicpOptions options)
    : book_(book), model_(model), options_(options) {
  if (book_.empty()) throw ValidationError("RICP-style retrieval needs a non-empty book");
  if (model_.dim != book_.dim()) throw ValidationError("cluster model and book dims differ");
  if (options_.candidates == 0 || options_.groups < 1) {
    throw ValidationError("RICP-style options need candidates >= 1 and groups >= 1");
  }
  for (ClusterPrinciple& p : principles) {
    if (p.text) principle_text_[p.cluster_index] = std::move(*p.text);
  }
}

Attachment RicpRetriever::Retrieve(const EmbeddingVector& query) const {
  Attachment a;
  const int cluster = AssignCluster(model_, query);
  if (auto it = principle_text_.find(cluster); it != principle_text_.end()) {
    a.cluster_principle = it->second;
  }

  const std::vector<RetrievalResult> top = RetrieveTopK(book_, query, options_.candidates);
  std::vector<std::size_t> keep;
  if (top.size() <= static_cast<std::size_t>(options_.groups)) {
    for (std::size_t i = 0; i < top.size(); ++i) keep.push_back(i);
  } else {
    std::vector<LabeledPoint> points;
    points.reserve(top.size());
    for (const RetrievalResult& r : top) {
      points.push_back({r.entry->sample_id, Normalized(r.entry->embedding)});
    }
    const ClusterModel groups = KMeans(points, options_.groups, options_.seed, options_.max_iters,
                                       nullptr, /*restarts=*/1);
    // Per group, the member nearest its centroid; earlier rank wins ties.
    std::vector<std::size_t> best(static_cast<std::size_t>(options_.groups), top.size());
    std::vector<double> best_d(static_cast<std::size_t>(options_.groups),
                               std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto g = static_cast<std::size_t>(groups.assignments.at(points[i].id));
      double d = 0.0;
      for (std::size_t j = 0; j < points[i].vector.values.size(); ++j) {
        const double diff = static_cast<double>(points[i].vector.values[j]) -
                            static_cast<double>(groups.centroids[g].values[j]);
        d += diff * diff;
      }
      if (d < best_d[g]) {
        best_d[g] = d;
        best[g] = i;
      }
    }
    for (std::size_t i : best) {
      if (i < top.size()) keep.push_back(i);
    }
    std::sort(keep.begin(), keep.end());
  }
  for (std::size_t i : keep) a.raw_feedback.push_back(RenderFeedbackRaw(top[i].entry->feedback));
  return a;
}

}  // namespace refine
