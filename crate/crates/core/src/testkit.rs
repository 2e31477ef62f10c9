use crate::config::RunConfig;
use crate::distill::{make_teacher, TeacherNet};
use crate::numkernel::TrainHyper;
use crate::space::SearchSpace;
use crate::task::Dataset;

/// The canonical toy experiment shrunk to run in well under a second.
pub fn small_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.task.rows = 240;
    cfg.teacher.train.epochs = 8;
    cfg.supernet.train = TrainHyper {
        epochs: 3,
        decay_every_steps: None,
        ..cfg.supernet.train.clone()
    };
    cfg.baseline.train = cfg.supernet.train.clone();
    cfg.standalone.train.epochs = 2;
    cfg.ssl.train.epochs = 3;
    cfg.sweep.op_train.epochs = 2;
    cfg.sweep.checkpoints = vec![0, 1, 2, 3];
    cfg.sweep.data_steps = 30;
    cfg
}

pub struct Fixture {
    pub cfg: RunConfig,
    pub space: SearchSpace,
    pub data: Dataset,
    pub teacher: TeacherNet,
}

pub fn fixture() -> Fixture {
    let cfg = small_config();
    let space = cfg.search_space().unwrap();
    let data = Dataset::generate(&cfg.task, cfg.seed).unwrap();
    let teacher = make_teacher(&space, &cfg.teacher_spec(), &data, &cfg.teacher_hyper()).unwrap();
    Fixture {
        cfg,
        space,
        data,
        teacher,
    }
}
