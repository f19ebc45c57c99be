// Knowledge-graph store: TSV ingestion, entity indexing, character-trigram
// entity linking, and hop-bounded candidate retrieval.
#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "kga/matrix.hpp"

namespace kga {

struct Triple {
  std::int64_t id = -1;
  std::string head;
  std::string relation;
  std::string tail;
};

// Exactly "(head, relation, tail)"; this surface form is what gets encoded.
std::string triple_to_text(const Triple& triple);

class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;
  explicit KnowledgeGraph(std::vector<Triple> triples, std::size_t warnings = 0);

  std::size_t size() const { return triples_.size(); }
  std::size_t warning_count() const { return warnings_; }
  const std::vector<Triple>& triples() const { return triples_; }

  // Throws std::out_of_range for an unknown id.
  const Triple& triple(std::int64_t id) const;

  bool has_entity(const std::string& name) const;  // name is normalized internally

  // All triples incident to the entity (as head or tail), ascending id.
  std::vector<std::int64_t> incident(const std::string& name) const;

  // Normalized entity names, sorted; the tie-break order for linking.
  const std::vector<std::string>& entity_names() const { return entity_names_; }

 private:
  std::vector<Triple> triples_;
  std::size_t warnings_ = 0;
  std::unordered_map<std::string, std::vector<std::int64_t>> incident_;  // by normalized name
  std::vector<std::string> entity_names_;
};

// One triple per line, three TAB-separated fields. Malformed lines are
// skipped and counted; duplicates get distinct ids (no deduplication).
// Throws std::runtime_error when the file is unreadable or no line is valid.
KnowledgeGraph ingest_tsv(const std::string& path);

// Debug export: {"triples": [{id, head, relation, tail}...]}.
std::string export_json(const KnowledgeGraph& kg);

// Lowercase character trigrams of the normalized string; strings shorter
// than 3 characters contribute themselves as a single element.
std::set<std::string> char_trigrams(const std::string& text);

struct LinkResult {
  std::string entity;  // normalized name
  double score = 0.0;  // trigram Jaccard against the question
};

// Argmax of trigram-Jaccard similarity between each entity name and the
// question; ties go to the lexicographically smallest name. Throws
// std::domain_error on an empty question or entity index.
LinkResult link_entity(const std::string& question, const KnowledgeGraph& kg);

// hops == 1: triples incident to the anchor. hops == 2: the 1-hop set plus
// triples incident to any entity reached by one hop. Deduplicated, ascending
// id. Throws std::out_of_range for an unknown anchor, std::invalid_argument
// for hops outside {1, 2}.
std::vector<std::int64_t> retrieve_candidates(const std::string& anchor,
                                              const KnowledgeGraph& kg, int hops);

}  // namespace kga
