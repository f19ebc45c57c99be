#include "kga/kg.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "kga/vocab.hpp"
#include "json.hpp"

namespace kga {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

}  // namespace

std::string triple_to_text(const Triple& triple) {
  return "(" + triple.head + ", " + triple.relation + ", " + triple.tail + ")";
}

KnowledgeGraph::KnowledgeGraph(std::vector<Triple> triples, std::size_t warnings)
    : triples_(std::move(triples)), warnings_(warnings) {
  for (const auto& t : triples_) {
    for (const std::string* name : {&t.head, &t.tail}) {
      const std::string norm = normalize_text(*name);
      auto& list = incident_[norm];
      if (list.empty() || list.back() != t.id) list.push_back(t.id);
    }
  }
  entity_names_.reserve(incident_.size());
  for (const auto& [name, ids] : incident_) entity_names_.push_back(name);
  std::sort(entity_names_.begin(), entity_names_.end());
  for (auto& [name, ids] : incident_) std::sort(ids.begin(), ids.end());
}

const Triple& KnowledgeGraph::triple(std::int64_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= triples_.size()) {
    throw std::out_of_range("KnowledgeGraph: unknown triple id " + std::to_string(id));
  }
  return triples_[static_cast<std::size_t>(id)];
}

bool KnowledgeGraph::has_entity(const std::string& name) const {
  return incident_.count(normalize_text(name)) != 0;
}

std::vector<std::int64_t> KnowledgeGraph::incident(const std::string& name) const {
  auto it = incident_.find(normalize_text(name));
  if (it == incident_.end()) {
    throw std::out_of_range("KnowledgeGraph: unknown entity '" + name + "'");
  }
  return it->second;
}

KnowledgeGraph ingest_tsv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("ingest_tsv: cannot open " + path);

  std::vector<Triple> triples;
  std::size_t warnings = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos || line.find('\t', t2 + 1) != std::string::npos) {
      ++warnings;
      continue;
    }
    Triple t;
    t.head = trim(line.substr(0, t1));
    t.relation = trim(line.substr(t1 + 1, t2 - t1 - 1));
    t.tail = trim(line.substr(t2 + 1));
    if (t.head.empty() || t.relation.empty() || t.tail.empty()) {
      ++warnings;
      continue;
    }
    t.id = static_cast<std::int64_t>(triples.size());
    triples.push_back(std::move(t));
  }
  if (triples.empty()) {
    throw std::runtime_error("ingest_tsv: no valid triples in " + path);
  }
  return KnowledgeGraph(std::move(triples), warnings);
}

std::string export_json(const KnowledgeGraph& kg) {
  nlohmann::json doc;
  doc["triples"] = nlohmann::json::array();
  for (const auto& t : kg.triples()) {
    doc["triples"].push_back(
        {{"id", t.id}, {"head", t.head}, {"relation", t.relation}, {"tail", t.tail}});
  }
  return doc.dump(2);
}

std::set<std::string> char_trigrams(const std::string& text) {
  const std::string norm = normalize_text(text);
  std::set<std::string> grams;
  if (norm.empty()) return grams;
  if (norm.size() < 3) {
    grams.insert(norm);
    return grams;
  }
  for (std::size_t i = 0; i + 3 <= norm.size(); ++i) grams.insert(norm.substr(i, 3));
  return grams;
}

namespace {

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t inter = 0;
  for (const auto& g : a) inter += b.count(g);
  const std::size_t uni = a.size() + b.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

LinkResult link_entity(const std::string& question, const KnowledgeGraph& kg) {
  if (normalize_text(question).empty()) {
    throw std::domain_error("link_entity: empty question");
  }
  if (kg.entity_names().empty()) {
    throw std::domain_error("link_entity: empty entity index");
  }
  const auto q_grams = char_trigrams(question);
  LinkResult best{kg.entity_names().front(), -1.0};
  for (const auto& name : kg.entity_names()) {  // sorted, so ties keep the smallest
    const double score = jaccard(char_trigrams(name), q_grams);
    if (score > best.score) best = {name, score};
  }
  return best;
}

std::vector<std::int64_t> retrieve_candidates(const std::string& anchor,
                                              const KnowledgeGraph& kg, int hops) {
  if (hops != 1 && hops != 2) {
    throw std::invalid_argument("retrieve_candidates: hops must be 1 or 2, got " +
                                std::to_string(hops));
  }
  std::set<std::int64_t> found;
  const auto first = kg.incident(anchor);  // throws for unknown anchors
  found.insert(first.begin(), first.end());
  if (hops == 2) {
    std::set<std::string> frontier;
    for (std::int64_t id : first) {
      const auto& t = kg.triple(id);
      frontier.insert(normalize_text(t.head));
      frontier.insert(normalize_text(t.tail));
    }
    for (const auto& entity : frontier) {
      const auto next = kg.incident(entity);
      found.insert(next.begin(), next.end());
    }
  }
  return {found.begin(), found.end()};
}

}  // namespace kga
