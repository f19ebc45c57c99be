// Synthetic KGQA generation. Facts are random (head, relation, tail) triples
// with functional (head, relation) pairs so every question has one answer.
// Training sequences teach in-context fact use:
//   1-hop: <fact> SEP <question> ANS <tail> SEP
//   2-hop: <fact1> SEP <fact2> SEP <question> ANS <tail> SEP
// where the trailing SEP terminates the answer segment for decoding.
// Evaluation questions are held out: their facts never appear in any
// training sequence, so the bare model cannot answer them from parameters.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kga/kg.hpp"
#include "kga/vocab.hpp"

namespace kga {

struct QAInstance {
  std::int64_t id = -1;
  std::string question;
  std::vector<TokenId> question_tokens;
  std::string answer;                   // normalized surface form
  std::vector<std::int64_t> gold;       // ordered; 2-hop gold chains tail to head
  std::vector<std::int64_t> candidates; // superset of gold
  std::string anchor;                   // head entity the questions starts from
  int hop = 1;
};

struct SyntheticSpec {
  std::uint64_t seed = 0;
  std::size_t n_entities = 0;
  std::size_t n_relations = 0;
  std::size_t n_facts = 0;
  std::size_t n_questions = 0;  // held-out evaluation instances
  int hop = 1;                  // 1 or 2
  std::size_t n_train_sequences = 0;  // 0 picks 4 * n_questions
};

struct SyntheticTask {
  KnowledgeGraph kg;
  Vocab vocab;
  std::vector<std::vector<TokenId>> corpus;
  std::vector<QAInstance> instances;
};

// Deterministic for a fixed spec. Throws std::invalid_argument when the
// counts are infeasible (n_facts > n_entities * n_relations, not enough
// distinct facts or chains for the requested questions).
SyntheticTask gen_synthetic_kgqa(const SyntheticSpec& spec);

// JSON-lines persistence for evaluation instances.
void save_instances(const std::vector<QAInstance>& instances, const std::string& path);
std::vector<QAInstance> load_instances(const std::string& path, const Vocab& vocab);

// The evaluation prompt for an instance: question tokens followed by ANS.
std::vector<TokenId> question_prompt(const QAInstance& instance);

}  // namespace kga
