//! Drive the ReAct loop with a scripted model and a single tool.

use testmaint::agents::{run_react, AgentSpec, Deadline, Tool};
use testmaint::llm::ScriptedProvider;

pub fn run() -> anyhow::Result<String> {
    let model = ScriptedProvider::with_queue([
        "Thought: I should look the value up.\nAction: lookup\nAction Input: timeout",
        "Thought: I have it.\nFinal Answer: the timeout is 300 seconds",
    ]);
    let mut tools = [Tool::new("lookup", "Returns a configuration value.", |key: &str| match key {
        "timeout" => Ok("300".to_string()),
        other => Err(format!("unknown key {other}")),
    })];
    let spec = AgentSpec::new("config-reader", "You answer questions about configuration.");
    let (answer, transcript) = run_react(&spec, "What is the timeout?", &model, &mut tools, Deadline::default())?;
    Ok(format!("{}\nanswer: {answer}\n", transcript.render()))
}

fn main() -> anyhow::Result<()> {
    print!("{}", run()?);
    Ok(())
}
