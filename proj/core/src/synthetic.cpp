#include "kga/synthetic.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "kga/rng.hpp"
#include "json.hpp"

namespace kga {

namespace {

std::string one_hop_question(const Triple& fact) {
  return "what is " + fact.relation + " of " + fact.head;
}

std::string two_hop_question(const Triple& first, const Triple& second) {
  return "what is " + second.relation + " of " + first.relation + " of " + first.head;
}

std::vector<TokenId> sequence_tokens(const std::vector<std::string>& fact_texts,
                                     const std::string& question, const std::string& answer,
                                     const Vocab& vocab) {
  std::vector<TokenId> seq;
  for (const auto& text : fact_texts) {
    const auto toks = tokenize(text, vocab);
    seq.insert(seq.end(), toks.begin(), toks.end());
    seq.push_back(kSepId);
  }
  const auto q = tokenize(question, vocab);
  seq.insert(seq.end(), q.begin(), q.end());
  seq.push_back(kAnsId);
  const auto a = tokenize(answer, vocab);
  seq.insert(seq.end(), a.begin(), a.end());
  seq.push_back(kSepId);
  return seq;
}

}  // namespace

SyntheticTask gen_synthetic_kgqa(const SyntheticSpec& spec) {
  if (spec.hop != 1 && spec.hop != 2) {
    throw std::invalid_argument("gen_synthetic_kgqa: hop must be 1 or 2");
  }
  if (spec.n_entities == 0 || spec.n_relations == 0 || spec.n_facts == 0) {
    throw std::invalid_argument("gen_synthetic_kgqa: zero-sized component");
  }
  if (spec.n_facts > spec.n_entities * spec.n_relations) {
    throw std::invalid_argument("gen_synthetic_kgqa: n_facts exceeds distinct (head, relation) pairs");
  }

  SeededRng rng(spec.seed);

  std::vector<std::string> entities(spec.n_entities), relations(spec.n_relations);
  for (std::size_t i = 0; i < spec.n_entities; ++i) entities[i] = "e" + std::to_string(i);
  for (std::size_t i = 0; i < spec.n_relations; ++i) relations[i] = "r" + std::to_string(i);

  // Functional facts: sample distinct (head, relation) pairs, random tails.
  std::vector<std::size_t> pair_ids(spec.n_entities * spec.n_relations);
  for (std::size_t i = 0; i < pair_ids.size(); ++i) pair_ids[i] = i;
  for (std::size_t i = 0; i < spec.n_facts; ++i) {
    const std::size_t j = i + rng.next_below(pair_ids.size() - i);
    std::swap(pair_ids[i], pair_ids[j]);
  }

  std::vector<Triple> facts(spec.n_facts);
  std::vector<std::vector<std::int64_t>> by_head(spec.n_entities);
  for (std::size_t i = 0; i < spec.n_facts; ++i) {
    const std::size_t head = pair_ids[i] / spec.n_relations;
    const std::size_t rel = pair_ids[i] % spec.n_relations;
    const std::size_t tail = rng.next_below(spec.n_entities);
    facts[i] = Triple{static_cast<std::int64_t>(i), entities[head], relations[rel],
                      entities[tail]};
    by_head[head].push_back(static_cast<std::int64_t>(i));
  }

  SyntheticTask task;
  task.kg = KnowledgeGraph(facts);

  // Vocabulary covers every fact and question surface form, so held-out
  // entities still have embeddings.
  std::vector<std::string> vocab_texts;
  vocab_texts.reserve(spec.n_facts + 4);
  for (const auto& f : facts) vocab_texts.push_back(triple_to_text(f));
  vocab_texts.push_back("what is of");
  task.vocab = Vocab::build(vocab_texts);

  const std::size_t want_train =
      spec.n_train_sequences == 0 ? 4 * spec.n_questions : spec.n_train_sequences;

  auto head_index = [&](const std::string& name) {
    return static_cast<std::size_t>(std::stoul(name.substr(1)));
  };

  std::vector<QAInstance> instances;
  std::vector<std::vector<TokenId>> corpus;

  if (spec.hop == 1) {
    std::vector<std::int64_t> order(spec.n_facts);
    for (std::size_t i = 0; i < spec.n_facts; ++i) order[i] = static_cast<std::int64_t>(i);
    for (std::size_t i = 0; i + 1 < order.size(); ++i) {
      const std::size_t j = i + rng.next_below(order.size() - i);
      std::swap(order[i], order[j]);
    }
    if (order.size() < spec.n_questions + 1) {
      throw std::invalid_argument("gen_synthetic_kgqa: not enough facts for held-out questions");
    }
    for (std::size_t i = 0; i < spec.n_questions; ++i) {
      const Triple& f = task.kg.triple(order[i]);
      QAInstance inst;
      inst.id = static_cast<std::int64_t>(i);
      inst.question = one_hop_question(f);
      inst.question_tokens = tokenize(inst.question, task.vocab);
      inst.answer = normalize_text(f.tail);
      inst.gold = {f.id};
      inst.anchor = normalize_text(f.head);
      inst.candidates = retrieve_candidates(f.head, task.kg, 1);
      inst.hop = 1;
      instances.push_back(std::move(inst));
    }
    const std::size_t train_count = std::min(want_train, order.size() - spec.n_questions);
    for (std::size_t i = 0; i < train_count; ++i) {
      const Triple& f = task.kg.triple(order[spec.n_questions + i]);
      corpus.push_back(sequence_tokens({triple_to_text(f)}, one_hop_question(f),
                                       normalize_text(f.tail), task.vocab));
    }
  } else {
    // Chains: (f1, f2) with tail(f1) == head(f2).
    std::vector<std::pair<std::int64_t, std::int64_t>> chains;
    for (const auto& f1 : facts) {
      for (std::int64_t second : by_head[head_index(f1.tail)]) {
        chains.emplace_back(f1.id, second);
      }
    }
    for (std::size_t i = 0; i + 1 < chains.size(); ++i) {
      const std::size_t j = i + rng.next_below(chains.size() - i);
      std::swap(chains[i], chains[j]);
    }
    if (chains.size() < spec.n_questions + 1) {
      throw std::invalid_argument("gen_synthetic_kgqa: not enough 2-hop chains");
    }

    std::unordered_set<std::int64_t> eval_facts;
    std::size_t taken = 0;
    for (std::size_t i = 0; i < chains.size() && taken < spec.n_questions; ++i) {
      const auto [a, b] = chains[i];
      const Triple& f1 = task.kg.triple(a);
      const Triple& f2 = task.kg.triple(b);
      QAInstance inst;
      inst.id = static_cast<std::int64_t>(taken);
      inst.question = two_hop_question(f1, f2);
      inst.question_tokens = tokenize(inst.question, task.vocab);
      inst.answer = normalize_text(f2.tail);
      inst.gold = {f1.id, f2.id};
      inst.anchor = normalize_text(f1.head);
      inst.candidates = retrieve_candidates(f1.head, task.kg, 2);
      inst.hop = 2;
      instances.push_back(std::move(inst));
      eval_facts.insert(a);
      eval_facts.insert(b);
      ++taken;
      chains[i].first = -1;  // consumed
    }
    // Training chains avoid every fact referenced by a held-out question.
    for (const auto& [a, b] : chains) {
      if (corpus.size() >= want_train) break;
      if (a < 0 || eval_facts.count(a) || eval_facts.count(b)) continue;
      const Triple& f1 = task.kg.triple(a);
      const Triple& f2 = task.kg.triple(b);
      corpus.push_back(sequence_tokens({triple_to_text(f1), triple_to_text(f2)},
                                       two_hop_question(f1, f2), normalize_text(f2.tail),
                                       task.vocab));
    }
    if (corpus.empty()) {
      throw std::invalid_argument("gen_synthetic_kgqa: no training chains left after holdout");
    }
  }

  task.corpus = std::move(corpus);
  task.instances = std::move(instances);
  return task;
}

void save_instances(const std::vector<QAInstance>& instances, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_instances: cannot open " + path);
  for (const auto& inst : instances) {
    nlohmann::json j{{"id", inst.id},         {"question", inst.question},
                     {"answer", inst.answer}, {"gold", inst.gold},
                     {"candidates", inst.candidates}, {"anchor", inst.anchor},
                     {"hop", inst.hop}};
    out << j.dump() << '\n';
  }
  if (!out) throw std::runtime_error("save_instances: write failed for " + path);
}

std::vector<QAInstance> load_instances(const std::string& path, const Vocab& vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_instances: cannot open " + path);
  std::vector<QAInstance> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    QAInstance inst;
    inst.id = j.at("id").get<std::int64_t>();
    inst.question = j.at("question").get<std::string>();
    inst.question_tokens = tokenize(inst.question, vocab);
    inst.answer = j.at("answer").get<std::string>();
    inst.gold = j.at("gold").get<std::vector<std::int64_t>>();
    inst.candidates = j.at("candidates").get<std::vector<std::int64_t>>();
    inst.anchor = j.at("anchor").get<std::string>();
    inst.hop = j.at("hop").get<int>();
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<TokenId> question_prompt(const QAInstance& instance) {
  std::vector<TokenId> prompt = instance.question_tokens;
  prompt.push_back(kAnsId);
  return prompt;
}

}  // namespace kga
