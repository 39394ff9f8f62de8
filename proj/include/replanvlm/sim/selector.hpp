#pragma once

#include <optional>
#include <string>
#include <vector>

#include "replanvlm/sim/types.hpp"

namespace replanvlm::sim {

/// Lowercased word tokens with stopwords dropped and noun synonyms folded
/// ("block" and "cube" are the same kind).
std::vector<std::string> normalize_tokens(const std::string& text);

/// Canonical key for a selector: sorted normalized tokens joined by spaces.
std::string selector_key(const std::string& selector);

/// Tokens an object answers to: color, kind, id words, attributes.
std::vector<std::string> object_tokens(const std::string& id, const std::string& kind,
                                       const std::string& color,
                                       const std::set<std::string>& attributes);

bool object_matches(const std::string& selector, const SceneObject& obj);
bool container_matches(const std::string& selector, const ContainerState& c);

/// Resolves a selector among the world's objects. Several matches resolve to
/// the one nearest `from`, then the lexicographically smallest id.
/// Throws WorldError(UnresolvableSelector) when nothing matches.
std::string resolve_object(const std::string& selector, const WorldState& world, const Pose& from);
std::optional<std::string> try_resolve_object(const std::string& selector, const WorldState& world,
                                              const Pose& from);

std::optional<std::string> try_resolve_container(const std::string& selector,
                                                 const WorldState& world, const Pose& from);

/// Shortest selector text that resolves back to this object from `from`:
/// "color kind" when that is unambiguous among matches of equal rank, else the id.
std::string describe_object(const WorldState& world, const std::string& id, const Pose& from);

}  // namespace replanvlm::sim
