from toolretrieval.llm_gateway import RecordingProvider, make_llm
from toolretrieval.planner import PlanState, plan_step
from toolretrieval.retrieval_pipeline import PipelineConfig
from toolretrieval.runtime import engine_catalog, engine_dataset, engine_pipeline
from toolretrieval.utils import write_jsonl

from ._base import EngineCommand


class Command(EngineCommand):
    help = "Print the sub-query decomposition of one query."

    required_paths = ("catalog_path", "queries_path")
    overrides = {"max_steps": "max_steps", "num_hypotheses": "num_hypotheses"}

    def add_engine_arguments(self, parser):
        parser.add_argument("--query-id", required=True)
        parser.add_argument("--trace", help="write the planning trace as JSON lines to this path")
        parser.add_argument("--max-steps", type=int, dest="max_steps")
        parser.add_argument("--num-hypotheses", type=int, dest="num_hypotheses")

    def run(self, config, options):
        catalog = engine_catalog(config)
        record = engine_dataset(config, catalog).get(options["query_id"])

        if config.include_retrieved:
            # the planner sees shortlisted names, so retrieval has to run in between
            result = self.closing(engine_pipeline(config, catalog)).run(record)
            steps = [(step.sub_query, ()) for step in result.steps]
            calls, exhausted = result.calls, result.exhausted
        else:
            steps, calls, exhausted = self.plan_only(config, record)

        self.say(f"query {record.id}: {len(steps)} sub-queries{' (step limit reached)' if exhausted else ''}")
        for sub_query, _ in steps:
            self.say(f"{sub_query.step_index}. {sub_query.text}")

        if options["trace"]:
            rows = [{"kind": "call", "query_id": record.id, **call.to_record()} for call in calls]
            rows.extend(
                {
                    "kind": "plan_step",
                    "query_id": record.id,
                    "step": sub_query.step_index,
                    "hypotheses": list(hypotheses),
                    "sub_query": sub_query.text,
                }
                for sub_query, hypotheses in steps
            )
            rows.append({"kind": "result", "query_id": record.id, "exhausted": exhausted})
            write_jsonl(options["trace"], rows)

    def plan_only(self, config, record):
        pipeline_config = PipelineConfig.from_engine(config)
        recorder = RecordingProvider(self.closing(make_llm(config)))
        state = PlanState(
            query_id=record.id,
            query=record.text,
            max_steps=config.max_steps,
            num_hypotheses=config.num_hypotheses,
            seed=config.plan_seed,
        )
        steps = []
        while not state.done:
            state, sub_query = plan_step(state, recorder, pipeline_config.decode)
            steps.append((sub_query, state.hypotheses))
        return steps, recorder.calls, state.exhausted
