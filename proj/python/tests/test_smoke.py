# Copyright 2026 The SRT Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
# ==============================================================================

import json

import pytest

import srt_sim

SMALL = {
    "seed": 3,
    "policy": {"kind": "drifting_markov", "vocab_size": 24, "order": 1,
               "drift_rate": 0.05, "eos_prob": 0.05},
    "dataset": {"synthetic": {"num_prompts": 6, "prompt_len": 4}},
    "generation": {"max_new_tokens": 48},
    "schedule": {"train_batch_size": 3, "samples_per_prompt": 3, "epochs": 2,
                 "batch_slots": 6},
}


def test_tree_counts_and_draft():
  cfg = srt_sim.TreeConfig()
  cfg.vocab_size = 8
  tree = srt_sim.RolloutTree("p", cfg)
  tree.insert_sequence([1, 2, 3])
  tree.insert_sequence([1, 2, 4])
  assert tree.count([1, 2]) == 2
  assert tree.children([1, 2]) == {3: 1, 4: 1}
  assert tree.longest_suffix_match([7, 1, 2]) == 2
  draft = tree.draft([1, 2])
  assert [d["token"] for d in draft] == [3, 4]
  assert draft[0]["score"] == pytest.approx(0.5)
  assert tree.check_invariants() == ""
  assert srt_sim.RolloutTree.from_snapshot(tree.snapshot()).snapshot() == tree.snapshot()


def test_speculative_matches_baseline():
  opts = srt_sim.MarkovOptions()
  opts.vocab_size = 16
  opts.sharpness = 4.0
  opts.eos_prob = 0.02
  policy = srt_sim.PolicySpec.random_markov(opts)
  cfg = srt_sim.TreeConfig()
  cfg.vocab_size = 16
  tree = srt_sim.RolloutTree("p", cfg)
  for i in range(4):
    tree.insert_sequence(srt_sim.baseline_generate(policy, [1], 64, seed=5, sequence_id=i)["tokens"])
  base = srt_sim.baseline_generate(policy, [1], 64, seed=9)
  spec = srt_sim.speculative_generate(policy, [1], tree, 64, seed=9)
  assert spec["tokens"] == base["tokens"]
  assert len(spec["steps"]) <= len(base["steps"])
  assert sum(s["emitted"] for s in spec["steps"]) == len(spec["tokens"])


def test_distribution_sums_to_one():
  policy = srt_sim.PolicySpec.from_corpus([[1, 2, 0], [1, 3, 0]], order=1)
  dist = policy.next_distribution([1])
  assert sum(dist) == pytest.approx(1.0)
  assert srt_sim.PolicySpec.deserialize(policy.serialize()).next_distribution([1]) == dist


def test_simulation_modes_share_rollouts():
  base = srt_sim.simulate(dict(SMALL, mode="baseline"))
  fast = srt_sim.simulate(dict(SMALL, mode="srt"))
  assert [r["rollout_digest"] for r in base["reports"]] == \
      [r["rollout_digest"] for r in fast["reports"]]
  assert base["rollouts"] == fast["rollouts"]
  assert sum(r["simulated_time"] for r in fast["reports"]) <= \
      sum(r["simulated_time"] for r in base["reports"])


def test_config_errors_raise_value_error():
  with pytest.raises(ValueError):
    srt_sim.simulate({"no_such_key": 1})
  resolved = json.loads(srt_sim.resolved_config(json.dumps(SMALL)))
  assert resolved["schema_version"] == 1


def test_exactness_and_overlap():
  summary = srt_sim.verify_exactness(20, seed=1)
  assert summary["ok"] and summary["identical"] == 20
  assert srt_sim.ngram_overlap([[1, 2, 3, 4]], [[1, 2], [2, 3]], n=2) == pytest.approx(2 / 3)


def test_cli_in_process(tmp_path):
  code, out, _ = srt_sim.run_cli(["verify-exactness", "--trials", "5"])
  assert code == 0 and "5 of 5" in out
  code, _, err = srt_sim.run_cli(["simulate", "-c", str(tmp_path / "missing.json")])
  assert code == 1 and "missing.json" in err
