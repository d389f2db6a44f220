//! Prompt text sent to remote annotators.

use crate::episode::Dimension;

/// Outer prompt. Placeholders are filled by [`super::render_prompt`].
pub const ATTRIBUTION_TEMPLATE: &str = r#"Your task: Your task is to evaluate the importance of each utterance in a conversation between two agents on a certain dimension of evaluation. You will be provided with the dialogue history, the social goal of one of the agents, and a certain dimension to be evaluated. For example, the dimension can be common social values such as adherence to social rules, relationship maintenance or improvement, or secret keeping. The dimension can also be objectives such as goal achieving, financial and material gains, or the discovery of new knowledge. Moreover, the dimension can also be about the performance of a language model as a social agent, such as the agent's believability as a human, avoidance of repetitions, and properly ending the conversation. However, you will be provided with only one dimension to be evaluated, and you should only focus on that dimension.

1. Attribution Instruction: {attribution_instruction}

2. Chosen Agent for Evaluation: {agent}

3. Agent's Goal: {goal}

4. Agent's Background: {agent_background}

5. Conversation History:
{conversation}

6. Dimension to be Evaluated: {dimension}

7. Dimension Description: {dimension_description}

8. Formatting Instructions:

Please format your response as a JSON object with the following structure:

{
    "Utterance 0 by {agent}": 0,
    "Utterance 1 by {agent}": 2,
    ...
}

The utterance numbers should correspond to their order in the conversation. Each score should reflect how much the utterance contributed to achieving the agent's goals. Please annotate every utterance made by an agent in the conversation, denoted "Utterance X by agent_name". For example, "Utterance 6 by Finnegan O'Malley". Please give a score even if the utterance is the end of the conversation."#;

/// Instruction for per-utterance importance scores. `{score_max}` is the
/// configured upper bound of the reply.
pub const DIRECT_ATTRIBUTION: &str = r#"1. Input Context:
- You will receive the dialogue history between two conversational agents, each with their own social goal.
- You will be provided with the social goal of one of the agents.
- You will be provided with the dimension description evaluated and the description of the dimension.

2. Objective:
- Assign an importance value to each utterance (identified by the agent's name and utterance number) based on its contribution to the achievement on the provided dimension. Note, you should only consider how critical an utterance is to the achievement of the dimension, not the quality of the utterance itself.
- Consider both the individual utterance and the responses from the other agent, as both affect the outcome.

3. Additional Reward Guidelines:
- If an utterance has no impact on the final goal achievement, assign it an importance of 0.
- If an utterance has a moderate impact on the final goal achievement, assign it an importance of 1 or 2 (depending on the degree of impact).
- If an utterance has a significant impact on the final goal achievement (aside from the key critical utterance already identified), assign it an importance of 3.

Note:
Please provide a score for each utterance of the chosen agent in the conversation. Do not provide scores for the other agent's utterances.
Please only assign a score between 0 and {score_max}."#;

/// Instruction asking for the single most critical utterance.
pub const SINGULAR_ATTRIBUTION: &str = r#"1. Input Context:
- You will receive the dialogue history between two conversational agents.
- You will also be provided with the social goal of one of the agents.

2. Objective:
- Identify the most critical utterance that has the highest impact on the final goal achievement, whether it is bad or good impact. Note, you should only consider how critical an utterance is to the final goal achievement, not the quality of the utterance itself.
- Consider both the individual utterance and the responses from the other agent, as both affect the final outcome.

3. Additional Guidelines:
- The conversation history will be given in a unique key of "Utterance {utterance number} by {agent name}" for each utterance. Please only return the key of the most critical utterance.
- Consider both the individual utterance and the responses from the other agent, as both affect the final outcome.

Note: You will also be given a formatting instruction for instructions. Please follow the instruction to ensure the evaluation process runs smoothly."#;

pub const GOAL_DESCRIPTION: &str = r#"Goal refers to the reiteration of the agent's social goals and the analysis of their achievement. A higher score indicates significant progress or achievement of the stated goals, while a lower score indicates minimal or no progress.
DOMAIN SPECIFIC SCORING GUIDELINES:
! Note: The following scoring guidelines are specific to the domain of goal and should be used in conjunction with the domain-specific scale. The domain specific rules ultimately override the general scoring scale. Here are the specific rules:
- The highest score should be assigned to the utterance that is most relevant to the goal. In general, avoid assigning the highest score to more than one utterance unless they are equally critical.
- A lower score should be assigned to the utterances that are not relevant to the goal or do not contribute to its achievement. The lowest score should be assigned to the utterances that do not make any progress towards the goal judging by the goal description and the conversation history.
- A lower score should be assigned to the utterances that are not effective in achieving the goal, judging by the response of the other agent. Effective utterances are those that lead to a positive response from the other agent, while ineffective utterances are those that lead to a negative or neutral response.
- Note that you should only consider the contribution to the goal achievement. For each utterance, assess whether the goal is achieved. If a goal is already achieved, the utterance should not be assigned a score higher than 1."#;

pub const REL_DESCRIPTION: &str = "Relationship refers to the analysis of the pre- and post-interaction relationships between agents. This includes evaluating whether the interactions enhance or harm social ties or status. A higher score indicates that the interaction significantly improves the relationship, while a lower score indicates harm to the relationship or social status.";

pub const KNO_DESCRIPTION: &str = "Knowledge refers to the assessment of information gained through the interaction. This includes evaluating whether the information is new, important, and relevant. A higher score indicates that the interaction contributes significantly to the acquisition of valuable knowledge.";

/// Rubric text for a scored dimension.
pub fn dimension_description(dimension: Dimension) -> Option<&'static str> {
    match dimension {
        Dimension::Goal => Some(GOAL_DESCRIPTION),
        Dimension::Rel => Some(REL_DESCRIPTION),
        Dimension::Kno => Some(KNO_DESCRIPTION),
        _ => None,
    }
}

/// Name shown in the prompt's dimension slot.
pub fn dimension_label(dimension: Dimension) -> &'static str {
    match dimension {
        Dimension::Goal => "goal",
        Dimension::Rel => "relationship",
        Dimension::Kno => "knowledge",
        Dimension::Bel => "believability",
        Dimension::Sec => "secret",
        Dimension::Soc => "social_rules",
        Dimension::Fin => "financial_and_material_benefits",
    }
}
