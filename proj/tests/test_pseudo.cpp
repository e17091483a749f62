#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <random>
#include <set>

#include "emotint/pseudo.hpp"

using namespace emotint;

namespace {

PseudoLabel label(const std::string& id, int e, int i, double ce, double ci) {
  return PseudoLabel{id, e, i, ce, ci};
}

std::vector<PseudoLabel> random_preds(int n, int ce, int ci, std::mt19937_64& rng, double low = 0.3) {
  std::uniform_int_distribution<int> e(0, ce - 1), i(0, ci - 1);
  std::uniform_real_distribution<double> conf(low, 1.0);
  // Coarse confidences so ties on min_conf actually occur.
  auto coarse = [&] { return std::round(conf(rng) * 50.0) / 50.0; };
  std::vector<PseudoLabel> out;
  for (int k = 0; k < n; ++k) out.push_back(label("p" + std::to_string(1000 + (k * 37) % n), e(rng), i(rng), coarse(), coarse()));
  return out;
}

std::set<std::string> ids(const std::vector<PseudoLabel>& v) {
  std::set<std::string> s;
  for (const auto& p : v) s.insert(p.sample_id);
  return s;
}

// Recounts the selection from scratch and checks that each rejected sample was
// blocked by a cap that was already full among samples ahead of it in the
// greedy order.
void audit_caps(const std::vector<PseudoLabel>& input, const std::vector<PseudoLabel>& kept, BalanceMode mode,
                int cap) {
  const auto chosen = ids(kept);
  auto ahead = [](const PseudoLabel& a, const PseudoLabel& b) {
    if (a.min_conf() != b.min_conf()) return a.min_conf() > b.min_conf();
    return a.sample_id < b.sample_id;
  };
  std::map<int, int> e_count, i_count;
  std::map<std::pair<int, int>, int> cell;
  for (const auto& p : kept) {
    ++e_count[p.emotion_pred];
    ++i_count[p.intent_pred];
    ++cell[{p.emotion_pred, p.intent_pred}];
  }
  if (mode == BalanceMode::per_task_cap) {
    for (const auto& [k, n] : e_count) CHECK(n <= cap);
    for (const auto& [k, n] : i_count) CHECK(n <= cap);
  } else {
    for (const auto& [k, n] : cell) CHECK(n <= cap);
  }
  for (const auto& r : input) {
    if (chosen.count(r.sample_id)) continue;
    int e_before = 0, i_before = 0, cell_before = 0;
    for (const auto& p : kept) {
      if (!ahead(p, r)) continue;
      e_before += p.emotion_pred == r.emotion_pred;
      i_before += p.intent_pred == r.intent_pred;
      cell_before += p.emotion_pred == r.emotion_pred && p.intent_pred == r.intent_pred;
    }
    if (mode == BalanceMode::per_task_cap) {
      CHECK((e_before >= cap || i_before >= cap));
    } else {
      CHECK(cell_before >= cap);
    }
  }
}

RecordDescriptor record(const std::string& id, Split split, std::optional<int> e, std::optional<int> i) {
  RecordDescriptor r;
  r.id = id;
  r.split = split;
  r.emotion_label = e;
  r.intent_label = i;
  for (auto& s : r.shapes) s = Shape{1, 4};
  return r;
}

DatasetManifest small_manifest() {
  DatasetManifest m;
  m.n_emotion = 7;
  m.n_intent = 9;
  m.records = {record("t0", Split::train, 1, 2), record("t1", Split::train, 3, 3), record("u0", Split::unlabeled, {}, {}),
               record("u1", Split::unlabeled, {}, {}), record("d0", Split::dev, 0, 0)};
  return m;
}

}  // namespace

TEST_CASE("confidence threshold needs both tasks") {
  const SelectionPolicy p{0.99, BalanceMode::none, std::nullopt};
  const std::vector<PseudoLabel> preds{label("a", 0, 0, 0.995, 0.992), label("b", 0, 0, 0.995, 0.98),
                                       label("c", 1, 1, 0.99, 0.99), label("d", 1, 1, 0.5, 0.999)};
  const auto kept = select_confident(preds, p);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].sample_id == "a");
  CHECK(kept[1].sample_id == "c");
  CHECK(select_confident(preds, SelectionPolicy{1.0, BalanceMode::none, std::nullopt}).empty());
}

TEST_CASE("selection preserves input order and every kept sample clears the bar") {
  std::mt19937_64 rng(10);
  const auto preds = random_preds(300, 7, 9, rng);
  for (double t : {0.5, 0.8, 0.9, 0.96}) {
    const auto kept = select_confident(preds, SelectionPolicy{t, BalanceMode::none, std::nullopt});
    std::size_t pos = 0;
    for (const auto& k : kept) {
      CHECK(k.emotion_conf >= t);
      CHECK(k.intent_conf >= t);
      while (pos < preds.size() && preds[pos].sample_id != k.sample_id) ++pos;
      CHECK(pos < preds.size());
    }
    std::size_t expected = 0;
    for (const auto& p : preds) expected += p.emotion_conf >= t && p.intent_conf >= t;
    CHECK(kept.size() == expected);
  }
}

TEST_CASE("policy validation") {
  CHECK_THROWS_AS((SelectionPolicy{0.0, BalanceMode::none, std::nullopt}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((SelectionPolicy{1.5, BalanceMode::none, std::nullopt}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((SelectionPolicy{0.9, BalanceMode::joint_cell_cap, std::nullopt}.validate()), std::invalid_argument);
  CHECK_THROWS_AS(balance_classes({}, BalanceMode::per_task_cap, std::nullopt), std::invalid_argument);
  CHECK_THROWS_AS(balance_classes({}, BalanceMode::per_task_cap, 0), std::invalid_argument);
  CHECK(parse_balance_mode("per_task_cap") == BalanceMode::per_task_cap);
}

TEST_CASE("balance_classes simple cases") {
  std::mt19937_64 rng(1);
  const auto preds = random_preds(40, 3, 3, rng);
  const auto same = balance_classes(preds, BalanceMode::none, std::nullopt);
  REQUIRE(same.size() == preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) CHECK(same[i].sample_id == preds[i].sample_id);

  const std::vector<PseudoLabel> cell{label("a", 2, 3, 0.991, 0.999), label("b", 2, 3, 0.999, 0.995),
                                      label("c", 2, 3, 0.993, 0.993), label("d", 2, 3, 0.999, 0.992),
                                      label("e", 2, 3, 0.990, 0.999)};
  const auto kept = balance_classes(cell, BalanceMode::joint_cell_cap, 2);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].sample_id == "b");
  CHECK(kept[1].sample_id == "c");
}

TEST_CASE("balance ties break by ascending id") {
  const std::vector<PseudoLabel> tie{label("z", 0, 0, 0.995, 0.995), label("m", 0, 0, 0.995, 0.995),
                                     label("a", 0, 0, 0.995, 0.999)};
  const auto kept = balance_classes(tie, BalanceMode::joint_cell_cap, 2);
  CHECK(ids(kept) == std::set<std::string>{"a", "m"});
}

TEST_CASE("balance caps pass a brute-force audit") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const auto preds = random_preds(200, 7, 9, rng);
    for (int cap : {1, 3, 10}) {
      const auto per_task = balance_classes(preds, BalanceMode::per_task_cap, cap);
      CHECK(per_task.size() <= preds.size());
      audit_caps(preds, per_task, BalanceMode::per_task_cap, cap);
      const auto joint = balance_classes(preds, BalanceMode::joint_cell_cap, cap);
      audit_caps(preds, joint, BalanceMode::joint_cell_cap, cap);
    }
  }
}

TEST_CASE("raising the threshold never grows the selection") {
  std::mt19937_64 rng(21);
  const auto preds = random_preds(400, 7, 9, rng, 0.4);
  for (auto mode : {BalanceMode::none, BalanceMode::per_task_cap, BalanceMode::joint_cell_cap}) {
    const std::optional<int> cap = mode == BalanceMode::none ? std::nullopt : std::optional<int>(4);
    std::set<std::string> previous;
    bool first = true;
    for (double t : {0.5, 0.7, 0.9, 0.95, 0.99, 1.0}) {
      const auto now = ids(select_confident(preds, SelectionPolicy{t, mode, cap}));
      if (!first) CHECK(std::includes(previous.begin(), previous.end(), now.begin(), now.end()));
      previous = now;
      first = false;
    }
  }
}

TEST_CASE("augment_dataset") {
  const auto m = small_manifest();
  SUBCASE("empty selection leaves the manifest unchanged") {
    const auto out = augment_dataset(m, {});
    REQUIRE(out.records.size() == m.records.size());
    for (std::size_t i = 0; i < m.records.size(); ++i) {
      CHECK(out.records[i].split == m.records[i].split);
      CHECK(out.records[i].emotion_label == m.records[i].emotion_label);
      CHECK(out.records[i].is_pseudo == m.records[i].is_pseudo);
    }
  }
  SUBCASE("selected record becomes pseudo-labeled train data") {
    const auto out = augment_dataset(m, {label("u1", 3, 5, 0.999, 0.999)});
    const auto* r = out.find("u1");
    REQUIRE(r != nullptr);
    CHECK(r->split == Split::train);
    CHECK(r->emotion_label == 3);
    CHECK(r->intent_label == 5);
    CHECK(r->is_pseudo);
    CHECK(out.count(Split::train) == m.count(Split::train) + 1);
    CHECK(m.find("u1")->split == Split::unlabeled);
    CHECK_FALSE(out.find("u0")->is_pseudo);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(augment_dataset(m, {label("nope", 0, 0, 1, 1)}), std::invalid_argument);
    CHECK_THROWS_AS(augment_dataset(m, {label("t0", 0, 0, 1, 1)}), std::invalid_argument);
    CHECK_THROWS_AS(augment_dataset(m, {label("u0", 0, 0, 1, 1), label("u0", 1, 1, 1, 1)}), std::invalid_argument);
    CHECK_THROWS_AS(augment_dataset(m, {label("u0", 7, 0, 1, 1)}), std::invalid_argument);
  }
}

TEST_CASE("default cell cap is the rounded-up median over all cells") {
  DatasetManifest m;
  m.n_emotion = 2;
  m.n_intent = 2;
  // Cell counts (0,0)=3, (0,1)=1, (1,0)=2, (1,1)=0 -> sorted 0 1 2 3 -> median 1.5 -> 2.
  int k = 0;
  auto add = [&](int e, int i, int n) {
    for (int j = 0; j < n; ++j) m.records.push_back(record("r" + std::to_string(k++), Split::train, e, i));
  };
  add(0, 0, 3);
  add(0, 1, 1);
  add(1, 0, 2);
  CHECK(default_cell_cap(m) == 2);
  auto pseudo = record("p", Split::train, 1, 1);
  pseudo.is_pseudo = true;
  for (int j = 0; j < 10; ++j) m.records.push_back(pseudo);
  CHECK(default_cell_cap(m) == 2);

  DatasetManifest empty;
  empty.n_emotion = 7;
  empty.n_intent = 9;
  CHECK(default_cell_cap(empty) == 1);
}

TEST_CASE("pseudo report round-trips") {
  const std::vector<PseudoLabel> preds{label("u0", 1, 2, 0.5, 0.6), label("u1", 3, 4, 0.999, 0.995)};
  const auto path = std::filesystem::temp_directory_path() / "emotint_test_pseudo.jsonl";
  write_pseudo_report(path, preds, {preds[1]});
  const auto rows = read_pseudo_report(path);
  REQUIRE(rows.size() == 2);
  CHECK_FALSE(rows[0].selected);
  CHECK(rows[1].selected);
  CHECK(rows[1].label.intent_pred == 4);
  CHECK(rows[1].label.emotion_conf == 0.999);
  std::filesystem::remove(path);
}
