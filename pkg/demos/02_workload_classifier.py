"""Train the fixture facet models and watch them track a scripted session.

The script drives working memory through underload -> optimal -> overload
while attention and perception stay optimal; the printout shows the rolling
per-facet summary following the script after each transition settles.
"""

from neuroguide.classifier import classify_all, extract_features, rolling_summary
from neuroguide.pipeline import PipelineConfig, StreamingPipeline, calibrate_baseline
from neuroguide.sim import FnirsGenerator, LoadScript, ScriptSegment, train_fixture_models

cfg = PipelineConfig()
print("training fixture models on the crossing script (cached per process)...")
models = train_fixture_models(cfg)
spec = models["memory"].feature_spec

script = LoadScript([
    ScriptSegment(15.0),  # neutral prefix used for baselining
    ScriptSegment(40.0, memory="underload"),
    ScriptSegment(40.0, memory="optimal"),
    ScriptSegment(40.0, memory="overload"),
])
gen = FnirsGenerator(script, cfg, seed=1)
n_cal = 150
frames = [gen.frame(t) for t in range(n_cal)]
pipeline = StreamingPipeline(cfg, calibrate_baseline(frames, cfg))

window, history = [], []
print("\n   t(s)  memory      attention   perception   (scripted memory)")
for tick in range(n_cal, int(script.duration_s * 10)):
    sample = pipeline.ingest(gen.frame(tick))
    if sample is None:
        continue
    window.append(sample)
    if len(window) > spec.window_samples:
        window.pop(0)
    if len(window) < spec.window_samples:
        continue
    vec = classify_all(extract_features(window, spec), models, sample.timestamp_ns)
    history.append(vec)
    t = sample.timestamp_ns / 1e9
    if round(t * 10) % 100 == 0:
        summary = rolling_summary(history, span_s=10.0)
        truth = script.states_at(t)["memory"]
        print(f"  {t:5.1f}  {summary['memory']['state']:<10}  "
              f"{summary['attention']['state']:<10}  "
              f"{summary['perception']['state']:<10}   ({truth})")
