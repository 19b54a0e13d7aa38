"""Streamlit viewer for pipeline reports: run a configured scenario or open a saved report JSON.

Launch with `streamlit run sharkov/report_app.py`.
"""

import json
import logging
from pathlib import Path

import pandas as pd
import streamlit as st

from sharkov.config import configure_logging
from sharkov.errors import SharkovError
from sharkov.theorem_pipeline import (
    load_config,
    read_config_file,
    records_frame,
    run,
    scenario_names,
    stages_frame,
)

configure_logging(1)
logger = logging.getLogger(__name__)

DEFAULT_CONFIG = Path(__file__).parent / "pipeline_config.json"

st.set_page_config(page_title="Sharkovskii Return Pipeline", layout="wide")

if "report" not in st.session_state:
    st.session_state.report = None
if "config_path" not in st.session_state:
    st.session_state.config_path = str(DEFAULT_CONFIG)

st.title("Sharkovskii Return Pipeline")
st.markdown("Per-index perturbations, second periodic orbits and returning neighborhoods")

with st.sidebar:
    st.header("Source")
    source = st.radio("Report source", ["Run scenario", "Open report JSON"])
    st.write("---")

    if source == "Run scenario":
        config_path = st.text_input("Config file", value=st.session_state.config_path)
        st.session_state.config_path = config_path
        try:
            names = scenario_names(read_config_file(config_path))
        except SharkovError as e:
            st.error(str(e))
            names = []

        scenario = st.selectbox("Scenario", names) if names else None
        depth = st.slider("Depth N", min_value=2, max_value=16, value=8)
        epsilon = st.number_input("epsilon", min_value=1e-6, max_value=1.0, value=0.5, format="%.6f")

        if st.button("Run Pipeline", type="primary", use_container_width=True):
            with st.spinner("Running pipeline..."):
                try:
                    config = load_config(
                        config_path,
                        scenario=scenario,
                        overrides={"depth": depth, "epsilon": epsilon},
                    )
                    st.session_state.report = run(config).to_dict()
                    st.rerun()
                except SharkovError as e:
                    st.error(f"Pipeline error: {e}")
                    logger.error(f"Pipeline error: {e}", exc_info=True)
    else:
        uploaded = st.file_uploader("Report JSON", type=["json"])
        if uploaded is not None:
            try:
                st.session_state.report = json.loads(uploaded.getvalue().decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as e:
                st.error(f"Not a report file: {e}")

data = st.session_state.report

if data:
    inputs = data.get("inputs", {})
    st.header(f"📊 {data.get('name', 'report')}")

    col1, col2, col3, col4 = st.columns(4)
    with col1:
        st.metric("Status", data.get("status", "?"))
    with col2:
        st.metric("Depth N", inputs.get("depth"))
    with col3:
        st.metric("R before S", data.get("star_order_verdict") or "n/a")
    with col4:
        accumulation = data.get("accumulation") or {}
        x1 = accumulation.get("x1")
        st.metric("x1", f"{x1:.10g}" if x1 is not None else "n/a")

    if data.get("x1_coincides_with_x0"):
        st.info("x1 coincides with x0")

    st.write("---")
    st.subheader("Stages")
    st.dataframe(stages_frame(data), use_container_width=True, hide_index=True)

    st.subheader("Per-index records")
    st.dataframe(records_frame(data), use_container_width=True, hide_index=True)

    schedule = data.get("delta_schedule")
    if schedule:
        with st.expander("Delta schedule", expanded=False):
            st.caption(schedule.get("note", ""))
            st.dataframe(pd.DataFrame(schedule.get("per_index", [])), hide_index=True)

    returns = data.get("returns") or []
    if returns:
        st.subheader("Returning neighborhoods")
        st.caption("Returns are certified, first returns are not")
        st.dataframe(
            pd.DataFrame(
                [
                    {
                        "n_k": r["n"],
                        "S": r["S_n"],
                        "W": r["window"],
                        "f^S(W)": r["image"],
                        "norm": r["norm"],
                        "bound": r["epsilon_k"],
                        "passed": r["passed"],
                    }
                    for r in returns
                ]
            ),
            use_container_width=True,
            hide_index=True,
        )

    for record in data.get("records", []):
        if record.get("flags"):
            with st.expander(f"n={record['n']} flags", expanded=False):
                st.json(record["flags"])

    st.write("---")
    st.download_button(
        label="Download JSON",
        data=json.dumps(data, indent=2),
        file_name=f"{data.get('name', 'report').lower().replace(' ', '_')}_report.json",
        mime="application/json",
    )
else:
    st.info("👈 Pick a scenario and click 'Run Pipeline', or open a saved report")
    st.caption(f"Config: {st.session_state.config_path}")
