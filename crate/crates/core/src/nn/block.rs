//! Residual basic block and two-block stages.

use rand::Rng;

use super::{relu_backward_inplace, relu_inplace, BatchNorm2d, BnTrace, Buffer, Conv2d, FeatureMap, Mode, Param};
use crate::exec::Exec;

#[derive(Debug, Clone, PartialEq)]
pub struct BasicBlock {
    pub conv1: Conv2d,
    pub bn1: BatchNorm2d,
    pub conv2: Conv2d,
    pub bn2: BatchNorm2d,
    /// 1×1 projection on the shortcut when the shape changes.
    pub downsample: Option<(Conv2d, BatchNorm2d)>,
}

#[derive(Debug, Clone)]
pub struct BlockTrace {
    input: FeatureMap,
    bn1: BnTrace,
    hidden: FeatureMap,
    bn2: BnTrace,
    ds_bn: Option<BnTrace>,
    output: FeatureMap,
}

fn bn_forward(bn: &BatchNorm2d, x: &FeatureMap, mode: Mode) -> (FeatureMap, Option<BnTrace>) {
    match mode {
        Mode::Train => {
            let (y, t) = bn.forward_train(x);
            (y, Some(t))
        }
        Mode::Eval => (bn.forward_eval(x), None),
    }
}

impl BasicBlock {
    pub fn new<R: Rng + ?Sized>(name: &str, cin: usize, cout: usize, stride: usize, rng: &mut R) -> Self {
        let downsample = (stride != 1 || cin != cout).then(|| {
            (
                Conv2d::new(&format!("{name}.downsample.0"), cin, cout, 1, stride, 0, rng),
                BatchNorm2d::new(&format!("{name}.downsample.1"), cout),
            )
        });
        BasicBlock {
            conv1: Conv2d::new(&format!("{name}.conv1"), cin, cout, 3, stride, 1, rng),
            bn1: BatchNorm2d::new(&format!("{name}.bn1"), cout),
            conv2: Conv2d::new(&format!("{name}.conv2"), cout, cout, 3, 1, 1, rng),
            bn2: BatchNorm2d::new(&format!("{name}.bn2"), cout),
            downsample,
        }
    }

    pub fn forward(&self, x: &FeatureMap, mode: Mode, exec: Exec) -> (FeatureMap, Option<BlockTrace>) {
        let h = self.conv1.forward(x, exec);
        let (mut h, bn1) = bn_forward(&self.bn1, &h, mode);
        relu_inplace(&mut h.data);
        let y = self.conv2.forward(&h, exec);
        let (mut y, bn2) = bn_forward(&self.bn2, &y, mode);
        let ds_bn = match &self.downsample {
            Some((conv, bn)) => {
                let s = conv.forward(x, exec);
                let (s, t) = bn_forward(bn, &s, mode);
                y.add_assign(&s);
                t
            }
            None => {
                y.add_assign(x);
                None
            }
        };
        relu_inplace(&mut y.data);
        let trace = (mode == Mode::Train).then(|| BlockTrace {
            input: x.clone(),
            bn1: bn1.unwrap(),
            hidden: h,
            bn2: bn2.unwrap(),
            ds_bn,
            output: y.clone(),
        });
        (y, trace)
    }

    pub fn backward(&mut self, trace: &BlockTrace, dy: &FeatureMap, need_dx: bool, exec: Exec) -> Option<FeatureMap> {
        let mut d = dy.clone();
        relu_backward_inplace(&mut d.data, &trace.output.data);
        let dh = self.bn2.backward(&trace.bn2, &d);
        let mut dh = self.conv2.backward(&trace.hidden, &dh, true, exec).unwrap();
        relu_backward_inplace(&mut dh.data, &trace.hidden.data);
        let dh = self.bn1.backward(&trace.bn1, &dh);
        let dx_main = self.conv1.backward(&trace.input, &dh, need_dx, exec);
        let dx_short = match &mut self.downsample {
            Some((conv, bn)) => {
                let ds = bn.backward(trace.ds_bn.as_ref().expect("downsample trace"), &d);
                conv.backward(&trace.input, &ds, need_dx, exec)
            }
            None => need_dx.then_some(d),
        };
        match (dx_main, dx_short) {
            (Some(mut a), Some(b)) => {
                a.add_assign(&b);
                Some(a)
            }
            _ => None,
        }
    }

    pub fn update_running(&mut self, trace: &BlockTrace) {
        self.bn1.update_running(&trace.bn1);
        self.bn2.update_running(&trace.bn2);
        if let (Some((_, bn)), Some(t)) = (&mut self.downsample, &trace.ds_bn) {
            bn.update_running(t);
        }
    }

    fn norms(&self) -> Vec<&BatchNorm2d> {
        let mut v = vec![&self.bn1, &self.bn2];
        if let Some((_, bn)) = &self.downsample {
            v.push(bn);
        }
        v
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut v = vec![&self.conv1.weight, &self.bn1.gamma, &self.bn1.beta, &self.conv2.weight, &self.bn2.gamma, &self.bn2.beta];
        if let Some((conv, bn)) = &self.downsample {
            v.extend([&conv.weight, &bn.gamma, &bn.beta]);
        }
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = vec![
            &mut self.conv1.weight,
            &mut self.bn1.gamma,
            &mut self.bn1.beta,
            &mut self.conv2.weight,
            &mut self.bn2.gamma,
            &mut self.bn2.beta,
        ];
        if let Some((conv, bn)) = &mut self.downsample {
            v.extend([&mut conv.weight, &mut bn.gamma, &mut bn.beta]);
        }
        v
    }

    pub fn buffers(&self) -> Vec<&Buffer> {
        self.norms()
            .into_iter()
            .flat_map(|bn| [&bn.running_mean, &bn.running_var])
            .collect()
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Buffer> {
        let mut v = vec![
            &mut self.bn1.running_mean,
            &mut self.bn1.running_var,
            &mut self.bn2.running_mean,
            &mut self.bn2.running_var,
        ];
        if let Some((_, bn)) = &mut self.downsample {
            v.extend([&mut bn.running_mean, &mut bn.running_var]);
        }
        v
    }
}

/// A residual stage: the first block may downsample, the second keeps the shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub blocks: Vec<BasicBlock>,
}

#[derive(Debug, Clone)]
pub struct StageTrace {
    blocks: Vec<BlockTrace>,
}

impl Stage {
    pub fn new<R: Rng + ?Sized>(name: &str, cin: usize, cout: usize, stride: usize, blocks: usize, rng: &mut R) -> Self {
        let blocks = (0..blocks)
            .map(|i| {
                let (ci, s) = if i == 0 { (cin, stride) } else { (cout, 1) };
                BasicBlock::new(&format!("{name}.{i}"), ci, cout, s, rng)
            })
            .collect();
        Stage { blocks }
    }

    pub fn forward(&self, x: &FeatureMap, mode: Mode, exec: Exec) -> (FeatureMap, Option<StageTrace>) {
        let mut cur = x.clone();
        let mut traces = Vec::new();
        for block in &self.blocks {
            let (y, t) = block.forward(&cur, mode, exec);
            traces.extend(t);
            cur = y;
        }
        let trace = (mode == Mode::Train).then_some(StageTrace { blocks: traces });
        (cur, trace)
    }

    pub fn backward(&mut self, trace: &StageTrace, dy: &FeatureMap, need_dx: bool, exec: Exec) -> Option<FeatureMap> {
        let mut d = dy.clone();
        for (i, (block, t)) in self.blocks.iter_mut().zip(&trace.blocks).enumerate().rev() {
            match block.backward(t, &d, need_dx || i > 0, exec) {
                Some(next) => d = next,
                None => return None,
            }
        }
        Some(d)
    }

    pub fn update_running(&mut self, trace: &StageTrace) {
        for (b, t) in self.blocks.iter_mut().zip(&trace.blocks) {
            b.update_running(t);
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        self.blocks.iter().flat_map(|b| b.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.blocks.iter_mut().flat_map(|b| b.params_mut()).collect()
    }

    pub fn buffers(&self) -> Vec<&Buffer> {
        self.blocks.iter().flat_map(|b| b.buffers()).collect()
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Buffer> {
        self.blocks.iter_mut().flat_map(|b| b.buffers_mut()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testutil::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn downsampling_stage_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let stage = Stage::new("layer", 2, 4, 2, 2, &mut rng);
        let x = random_map(2, 2, 9, 9, 1);
        let (y, trace) = stage.forward(&x, Mode::Train, Exec::Sequential);
        assert_eq!(y.dims(), [2, 4, 5, 5]);
        assert!(trace.is_some());
        assert!(stage.blocks[0].downsample.is_some());
        assert!(stage.blocks[1].downsample.is_none());
        let (_, none) = stage.forward(&x, Mode::Eval, Exec::Sequential);
        assert!(none.is_none());
    }

    #[test]
    fn stage_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut stage = Stage::new("layer", 2, 3, 2, 2, &mut rng);
        let x = random_map(2, 2, 6, 6, 2);
        let (y, trace) = stage.forward(&x, Mode::Train, Exec::Sequential);
        let up = random_vec(y.data.len(), 3);
        let dy = FeatureMap::from_vec(y.n, y.c, y.h, y.w, up.clone());
        let dx = stage.backward(&trace.unwrap(), &dy, true, Exec::Sequential).unwrap();
        let f = |xv: &[f32]| {
            let xm = FeatureMap::from_vec(2, 2, 6, 6, xv.to_vec());
            dot(&stage.forward(&xm, Mode::Train, Exec::Sequential).0.data, &up)
        };
        for i in [0, 11, 37, 70, 143] {
            assert_close(dx.data[i] as f64, fd(&x.data, i, 5e-3, f), 5e-2, "dx");
        }
        let w = stage.blocks[1].conv2.weight.value.clone();
        for i in [0, 13, 40] {
            let num = fd(&w, i, 5e-3, |wv| {
                let mut s = stage.clone();
                s.blocks[1].conv2.weight.value = wv.to_vec();
                dot(&s.forward(&x, Mode::Train, Exec::Sequential).0.data, &up)
            });
            assert_close(stage.blocks[1].conv2.weight.grad[i] as f64, num, 5e-2, "dw");
        }
    }
}
