def get_templates() -> dict[str, str]:
    """Hold YAML config templates, one per task, written by ``csn setup``

    Each template is formatted with ``run_name`` before writing.
    """

    simulate_content = '''# Generate one simulated dataset per seed
task: simulate
data:
  scenario: 2way_pure       # main_cont, main_jump, 2way_cont, 2way_jump, 2way_pure, 3way_cont, 3way_jump, 3way_pure
  response: continuous      # continuous or binary
  n: 10000
  n_test: 50000
seeds: [0]
output: runs/{run_name}
'''

    fit_content = '''# Fit the off-the-shelf TreeNet2 defaults on a simulated scenario
task: fit
data:
  scenario: main_cont
  response: continuous
  n: 10000
  n_test: 50000
model:
  preset: treenet2          # treenet2, csn or fcnn
  # csn:                    # overrides used with preset csn
  #   basis: sigmoid_trainable
  #   m: 5
  #   d: 20
  #   k: 2
train:
  max_epochs: 500
  patience: 50
seeds: [0, 1, 2]
jobs: 1
output: runs/{run_name}
'''

    evaluate_content = '''# Score a saved model on freshly generated data
task: evaluate
model_path: runs/fit/model_seed0.npz
data:
  scenario: main_cont
  response: continuous
  n: 10000
  n_test: 50000
seeds: [0]
output: runs/{run_name}
'''

    search_content = '''# 20-trial random search over the TreeNet space
task: search
data:
  scenario: 3way_pure
  response: continuous
  n: 10000
  n_test: 50000
search:
  space: treenet            # treenet or fcnn
  trials: 20
seeds: [0]
jobs: 4
output: runs/{run_name}
'''

    diagnose_content = '''# Importance, PDP, ICE and H-statistic for a fitted model
task: diagnose
data:
  source: bike_sharing
  path: data/hour.csv
model:
  preset: treenet2          # fitted first when model_path is not given
# model_path: runs/fit/model_seed0.npz
diagnose:
  top: 5
  grid_size: 50
  pd_subsample: 500
  h_subsample: 300
  repeats: 5
seeds: [0]
output: runs/{run_name}
'''

    reproduce_content = '''# Compare against a published benchmark table
task: reproduce
reproduce:
  table: "4-2"              # 4-2, 4-3, 4-4 or 5-2
  budget: default           # default (TreeNet2 + FCNN) or search (adds the tuned TreeNet column)
  # rows: [main_cont, 2way_pure]
  # bike_path: data/hour.csv
seeds: [0, 1, 2]
jobs: 1
output: runs/{run_name}
'''

    return {
        "simulate.yaml": simulate_content,
        "fit.yaml": fit_content,
        "evaluate.yaml": evaluate_content,
        "search.yaml": search_content,
        "diagnose.yaml": diagnose_content,
        "reproduce.yaml": reproduce_content,
    }
