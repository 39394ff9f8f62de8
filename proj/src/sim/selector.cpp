#include "replanvlm/sim/selector.hpp"

#include <algorithm>
#include <cctype>
#include <map>

namespace replanvlm::sim {
namespace {

const std::set<std::string>& stopwords() {
  static const std::set<std::string> words{"the", "a", "an", "of", "to", "in", "on", "into",
                                           "onto", "it", "up", "with", "and", "from", "at",
                                           "that", "this", "its", "then"};
  return words;
}

const std::map<std::string, std::string>& synonyms() {
  static const std::map<std::string, std::string> words{
      {"block", "cube"},    {"blocks", "cube"},   {"cubes", "cube"},   {"toys", "toy"},
      {"apples", "apple"},  {"bananas", "banana"}, {"plates", "plate"}, {"boxes", "box"},
      {"drawers", "drawer"}, {"fruits", "fruit"}, {"cups", "cup"},     {"oranges", "orange"},
  };
  return words;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

bool tokens_subset(const std::vector<std::string>& needles, const std::vector<std::string>& hay) {
  if (needles.empty()) return false;
  return std::all_of(needles.begin(), needles.end(),
                     [&](const std::string& t) { return contains(hay, t); });
}

template <class Candidates>
std::optional<std::string> pick_nearest(const Candidates& matches, const Pose& from) {
  // matches: vector<pair<id, pose>> in id order
  if (matches.empty()) return std::nullopt;
  const auto* best = &matches.front();
  double best_d = distance(best->second, from);
  for (const auto& m : matches) {
    double d = distance(m.second, from);
    if (d < best_d - 1e-9) {
      best = &m;
      best_d = d;
    }
  }
  return best->first;
}

}  // namespace

std::vector<std::string> normalize_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (cur.empty()) return;
    if (!stopwords().contains(cur)) {
      auto it = synonyms().find(cur);
      out.push_back(it == synonyms().end() ? cur : it->second);
    }
    cur.clear();
  };
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  return out;
}

std::string selector_key(const std::string& selector) {
  auto tokens = normalize_tokens(selector);
  std::sort(tokens.begin(), tokens.end());
  tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
  std::string key;
  for (const auto& t : tokens) key += (key.empty() ? "" : " ") + t;
  return key;
}

std::vector<std::string> object_tokens(const std::string& id, const std::string& kind,
                                       const std::string& color,
                                       const std::set<std::string>& attributes) {
  std::vector<std::string> tokens = normalize_tokens(id);
  for (auto& t : normalize_tokens(kind)) tokens.push_back(t);
  for (auto& t : normalize_tokens(color)) tokens.push_back(t);
  for (const auto& a : attributes) {
    for (auto& t : normalize_tokens(a)) tokens.push_back(t);
  }
  return tokens;
}

bool object_matches(const std::string& selector, const SceneObject& obj) {
  if (trim(selector) == obj.id) return true;
  return tokens_subset(normalize_tokens(selector),
                       object_tokens(obj.id, obj.kind, obj.color, obj.attributes));
}

bool container_matches(const std::string& selector, const ContainerState& c) {
  if (trim(selector) == c.id) return true;
  auto hay = normalize_tokens(c.id);
  hay.push_back(to_string(c.kind));
  return tokens_subset(normalize_tokens(selector), hay);
}

std::optional<std::string> try_resolve_object(const std::string& selector, const WorldState& world,
                                              const Pose& from) {
  std::vector<std::pair<std::string, Pose>> matches;
  for (const auto& [id, obj] : world.objects) {
    if (object_matches(selector, obj)) matches.emplace_back(id, obj.pose);
  }
  // An exact id match wins over word matches.
  for (const auto& m : matches) {
    if (m.first == trim(selector)) return m.first;
  }
  return pick_nearest(matches, from);
}

std::string resolve_object(const std::string& selector, const WorldState& world, const Pose& from) {
  auto id = try_resolve_object(selector, world, from);
  if (!id) {
    throw WorldError(WorldErrc::UnresolvableSelector, selector,
                     "no object matches '" + selector + "'");
  }
  return *id;
}

std::optional<std::string> try_resolve_container(const std::string& selector,
                                                 const WorldState& world, const Pose& from) {
  std::vector<std::pair<std::string, Pose>> matches;
  for (const auto& [id, c] : world.containers) {
    if (id == trim(selector)) return id;
    if (container_matches(selector, c)) matches.emplace_back(id, c.pose);
  }
  return pick_nearest(matches, from);
}

std::string describe_object(const WorldState& world, const std::string& id, const Pose& from) {
  auto it = world.objects.find(id);
  if (it == world.objects.end()) return id;
  const auto& obj = it->second;
  std::vector<std::string> candidates{obj.kind};
  if (!obj.color.empty()) candidates.push_back(obj.color + " " + obj.kind);
  for (const auto& text : candidates) {
    std::size_t n = 0;
    for (const auto& [oid, o] : world.objects) {
      if (object_matches(text, o)) ++n;
    }
    if (n == 1 && try_resolve_object(text, world, from) == id) return text;
  }
  return id;
}

}  // namespace replanvlm::sim
