//! Dialog datasets: schema, files, synthetic generation and relabeling.

mod io;
mod oracle;
mod schema;
mod synthetic;
mod view;
mod visdialq;

pub use io::{dataset_to_json, load_dataset, parse_dataset, save_dataset, write_atomic};
pub use oracle::{oracle_scores, Oracle};
pub use schema::{Dialog, DialogDataset, Round};
pub use synthetic::{
    answer_from_attributes, caption_text, gen_synthetic, question_text, SyntheticSpec, DEFAULT_ATTRIBUTES,
    DEFAULT_ENTITIES,
};
pub use view::{example_index, example_view, ExampleView, HistoryNode, Mode, QuerySource};
pub use visdialq::{qa_pair_text, to_visdialq, VisdialQ};
