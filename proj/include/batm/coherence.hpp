#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <iterator>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "batm/common.hpp"
#include "batm/topics.hpp"

namespace batm {

inline constexpr std::size_t kDefaultWindowSize = 110;
inline constexpr double kDefaultNpmiEpsilon = 1e-12;

// Boolean sliding-window document frequencies for a fixed set of tracked
// tokens.
class WindowCounts {
 public:
  std::size_t window_size() const { return window_size_; }
  std::size_t total_windows() const { return total_windows_; }

  std::size_t frequency(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? 0 : frequency_[it->second];
  }

  std::size_t joint(const std::string& a, const std::string& b) const {
    auto ia = index_.find(a);
    auto ib = index_.find(b);
    if (ia == index_.end() || ib == index_.end()) return 0;
    if (ia->second == ib->second) return frequency_[ia->second];
    auto it = joint_.find(key(ia->second, ib->second));
    return it == joint_.end() ? 0 : it->second;
  }

  // Windows never cross document boundaries. A document shorter than the
  // window contributes exactly one window.
  static WindowCounts build(const std::vector<std::vector<std::string>>& documents,
                            const std::vector<std::string>& tracked, std::size_t window_size) {
    if (window_size < 1) throw ConfigError("window size must be >= 1");
    if (documents.empty()) throw ConfigError("coherence needs a non-empty corpus");
    WindowCounts counts;
    counts.window_size_ = window_size;
    for (const auto& t : tracked) {
      if (counts.index_.emplace(t, counts.index_.size()).second) counts.frequency_.push_back(0);
    }
    std::vector<int> mapped;
    std::map<std::size_t, std::size_t> in_window;  // tracked index -> occurrences
    for (const auto& doc : documents) {
      if (doc.empty()) continue;
      mapped.clear();
      for (const auto& tok : doc) {
        auto it = counts.index_.find(tok);
        mapped.push_back(it == counts.index_.end() ? -1 : static_cast<int>(it->second));
      }
      const std::size_t width = std::min(window_size, mapped.size());
      in_window.clear();
      for (std::size_t i = 0; i < width; ++i) {
        if (mapped[i] >= 0) ++in_window[static_cast<std::size_t>(mapped[i])];
      }
      counts.record(in_window);
      for (std::size_t start = 1; start + width <= mapped.size(); ++start) {
        const int leaving = mapped[start - 1];
        const int entering = mapped[start + width - 1];
        if (leaving >= 0) {
          auto it = in_window.find(static_cast<std::size_t>(leaving));
          if (--it->second == 0) in_window.erase(it);
        }
        if (entering >= 0) ++in_window[static_cast<std::size_t>(entering)];
        counts.record(in_window);
      }
    }
    if (counts.total_windows_ == 0) throw ConfigError("coherence corpus has no tokens");
    return counts;
  }

 private:
  static std::uint64_t key(std::size_t a, std::size_t b) {
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint64_t>(b);
  }

  void record(const std::map<std::size_t, std::size_t>& present) {
    ++total_windows_;
    for (auto a = present.begin(); a != present.end(); ++a) {
      ++frequency_[a->first];
      for (auto b = std::next(a); b != present.end(); ++b) ++joint_[key(a->first, b->first)];
    }
  }

  std::size_t window_size_ = kDefaultWindowSize;
  std::size_t total_windows_ = 0;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::size_t> frequency_;
  std::unordered_map<std::uint64_t, std::size_t> joint_;
};

// ln((p_ij + eps) / (p_i p_j)) / -ln(p_ij + eps). A pair present in every
// window is perfectly associated and scores 1.
inline double npmi(const std::string& a, const std::string& b, const WindowCounts& counts,
                   double eps = kDefaultNpmiEpsilon) {
  const double w = static_cast<double>(counts.total_windows());
  const double fa = static_cast<double>(counts.frequency(a));
  const double fb = static_cast<double>(counts.frequency(b));
  if (fa == 0.0 || fb == 0.0) throw ConfigError("npmi undefined for a token absent from every window");
  const double fj = static_cast<double>(counts.joint(a, b));
  if (fj == w) return 1.0;
  const double pa = fa / w;
  const double pb = fb / w;
  const double pj = fj / w + eps;
  return std::log(pj / (pa * pb)) / -std::log(pj);
}

struct CvScore {
  std::optional<double> score;
  std::vector<std::string> words;            // words with nonzero frequency
  std::vector<std::string> zero_context;     // contributed cosine 0
};

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

// C_v with one-set segmentation: each word's NPMI context vector against all
// topic words is compared by cosine to the sum of all context vectors, and
// the cosines are averaged.
inline CvScore cv_score(const std::vector<std::string>& topic_words, const WindowCounts& counts,
                        double eps = kDefaultNpmiEpsilon) {
  CvScore out;
  for (const auto& w : topic_words) {
    if (counts.frequency(w) > 0) out.words.push_back(w);
  }
  const std::size_t n = out.words.size();
  if (n < 2) return out;
  std::vector<std::vector<double>> context(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      context[i][j] = context[j][i] = npmi(out.words[i], out.words[j], counts, eps);
    }
  }
  std::vector<double> total(n, 0.0);
  for (const auto& u : context) {
    for (std::size_t j = 0; j < n; ++j) total[j] += u[j];
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const bool zero = std::all_of(context[i].begin(), context[i].end(), [](double x) { return x == 0.0; });
    if (zero) out.zero_context.push_back(out.words[i]);
    sum += cosine(context[i], total);
  }
  out.score = sum / static_cast<double>(n);
  return out;
}

struct TopicCoherence {
  std::size_t head = 0;
  std::optional<double> cv;
  std::vector<std::string> words;
};

struct CoherenceResult {
  std::vector<TopicCoherence> topics;
  std::optional<double> average_cv;

  nlohmann::json to_json() const {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& t : topics) {
      list.push_back({{"head", t.head}, {"cv", t.cv ? nlohmann::json(*t.cv) : nlohmann::json()}, {"words", t.words}});
    }
    return {{"topics", list}, {"average_cv", average_cv ? nlohmann::json(*average_cv) : nlohmann::json()}};
  }

  // Head | descriptor | C_v, one topic per line.
  void write_table(std::ostream& out) const {
    out << "head\tC_v\tdescriptor\n";
    for (const auto& t : topics) {
      std::ostringstream words;
      for (std::size_t i = 0; i < t.words.size(); ++i) words << (i ? " " : "") << t.words[i];
      out << t.head << '\t';
      if (t.cv) {
        out << std::fixed << std::setprecision(2) << *t.cv;
      } else {
        out << "n/a";
      }
      out << '\t' << words.str() << '\n';
    }
    out << "average\t";
    if (average_cv) {
      out << std::fixed << std::setprecision(4) << *average_cv;
    } else {
      out << "n/a";
    }
    out << '\n';
  }
};

// Scores the top-T terms of each descriptor. Topics with fewer than two
// usable words are reported without a score and left out of the average.
inline CoherenceResult coherence_report(const std::vector<TopicDescriptor>& descriptors,
                                        const std::vector<std::vector<std::string>>& corpus,
                                        std::size_t window_size = kDefaultWindowSize, std::size_t top_t = 25,
                                        double eps = kDefaultNpmiEpsilon) {
  if (descriptors.empty()) throw ConfigError("coherence report needs at least one topic");
  std::vector<std::string> tracked;
  std::vector<std::vector<std::string>> topic_words;
  for (const auto& d : descriptors) {
    auto words = d.words();
    if (words.size() > top_t) words.resize(top_t);
    tracked.insert(tracked.end(), words.begin(), words.end());
    topic_words.push_back(std::move(words));
  }
  const auto counts = WindowCounts::build(corpus, tracked, window_size);
  CoherenceResult result;
  double sum = 0.0;
  std::size_t scored = 0;
  for (std::size_t t = 0; t < descriptors.size(); ++t) {
    auto cv = cv_score(topic_words[t], counts, eps);
    if (!cv.score) {
      emit_warning("topic " + std::to_string(descriptors[t].head) + " has fewer than two usable words; not scored");
    } else {
      sum += *cv.score;
      ++scored;
    }
    result.topics.push_back({descriptors[t].head, cv.score, topic_words[t]});
  }
  if (scored > 0) result.average_cv = sum / static_cast<double>(scored);
  return result;
}

}  // namespace batm
