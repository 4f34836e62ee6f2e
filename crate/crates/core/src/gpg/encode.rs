use edgesched_nn::{Activation, DenseNet, ForwardCache, NnError};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Hidden widths of the orchestration networks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GpgShape {
    pub message_dim: usize,
    pub message_hidden: Vec<usize>,
    pub update_hidden: Vec<usize>,
    pub head_hidden: Vec<usize>,
}

impl Default for GpgShape {
    fn default() -> Self {
        Self {
            message_dim: 32,
            message_hidden: vec![64],
            update_hidden: vec![64, 32],
            head_hidden: vec![128, 64, 32],
        }
    }
}

/// Message (`f`) and update (`h`) networks for the node, eAP and cluster
/// levels plus the node-value head and the scaling head.
#[derive(Clone, Debug)]
pub struct GpgNets {
    pub message: [DenseNet; 3],
    pub update: [DenseNet; 3],
    pub node_value: DenseNet,
    pub scale_value: DenseNet,
    pub attr_dim: usize,
    pub scale_actions: usize,
}

/// Parameter gradients, one buffer per network of [`GpgNets`].
#[derive(Clone, Debug, PartialEq)]
pub struct GpgGrads {
    pub message: [Vec<f64>; 3],
    pub update: [Vec<f64>; 3],
    pub node_value: Vec<f64>,
    pub scale_value: Vec<f64>,
}

fn chain(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut w = vec![input];
    w.extend_from_slice(hidden);
    w.push(output);
    w
}

impl GpgNets {
    pub fn new<R: Rng + ?Sized>(
        attr_dim: usize,
        scale_actions: usize,
        shape: &GpgShape,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let mk = |w: Vec<usize>, rng: &mut R| {
            DenseNet::mlp(&w, Activation::Relu, Activation::Identity, rng)
        };
        let f = |rng: &mut R| {
            mk(
                chain(attr_dim, &shape.message_hidden, shape.message_dim),
                rng,
            )
        };
        let h = |rng: &mut R| {
            mk(
                chain(shape.message_dim, &shape.update_hidden, attr_dim),
                rng,
            )
        };
        Ok(Self {
            message: [f(rng)?, f(rng)?, f(rng)?],
            update: [h(rng)?, h(rng)?, h(rng)?],
            node_value: mk(chain(3 * attr_dim, &shape.head_hidden, 1), rng)?,
            scale_value: mk(
                chain(3 * attr_dim + scale_actions, &shape.head_hidden, 1),
                rng,
            )?,
            attr_dim,
            scale_actions,
        })
    }

    pub fn zero_grads(&self) -> GpgGrads {
        let z = |n: &DenseNet| vec![0.0; n.num_params()];
        GpgGrads {
            message: [
                z(&self.message[0]),
                z(&self.message[1]),
                z(&self.message[2]),
            ],
            update: [z(&self.update[0]), z(&self.update[1]), z(&self.update[2])],
            node_value: z(&self.node_value),
            scale_value: z(&self.scale_value),
        }
    }

    /// All eight networks with stable names, for checkpoints and optimizers.
    pub fn named(&self) -> Vec<(&'static str, &DenseNet)> {
        vec![
            ("gpg.message_node", &self.message[0]),
            ("gpg.message_eap", &self.message[1]),
            ("gpg.message_cluster", &self.message[2]),
            ("gpg.update_node", &self.update[0]),
            ("gpg.update_eap", &self.update[1]),
            ("gpg.update_cluster", &self.update[2]),
            ("gpg.node_value", &self.node_value),
            ("gpg.scale_value", &self.scale_value),
        ]
    }

    pub fn named_mut(&mut self) -> Vec<(&'static str, &mut DenseNet)> {
        let [m0, m1, m2] = &mut self.message;
        let [u0, u1, u2] = &mut self.update;
        vec![
            ("gpg.message_node", m0),
            ("gpg.message_eap", m1),
            ("gpg.message_cluster", m2),
            ("gpg.update_node", u0),
            ("gpg.update_eap", u1),
            ("gpg.update_cluster", u2),
            ("gpg.node_value", &mut self.node_value),
            ("gpg.scale_value", &mut self.scale_value),
        ]
    }
}

impl GpgGrads {
    pub fn buffers(&self) -> Vec<&Vec<f64>> {
        vec![
            &self.message[0],
            &self.message[1],
            &self.message[2],
            &self.update[0],
            &self.update[1],
            &self.update[2],
            &self.node_value,
            &self.scale_value,
        ]
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let [m0, m1, m2] = &mut self.message;
        let [u0, u1, u2] = &mut self.update;
        vec![
            m0,
            m1,
            m2,
            u0,
            u1,
            u2,
            &mut self.node_value,
            &mut self.scale_value,
        ]
    }

    pub fn norm(&self) -> f64 {
        self.buffers()
            .iter()
            .flat_map(|b| b.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn add_scaled(&mut self, other: &GpgGrads, scale: f64) {
        for (a, b) in self.buffers_mut().into_iter().zip(other.buffers()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += scale * y);
        }
    }
}

/// Raw attributes of every node and the eAP membership, nodes listed in
/// ascending id order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphInput {
    pub attrs: Vec<Vec<f64>>,
    pub eap_nodes: Vec<Vec<usize>>,
}

impl GraphInput {
    pub fn eap_of(&self, node: usize) -> usize {
        self.eap_nodes
            .iter()
            .position(|ns| ns.contains(&node))
            .expect("every node belongs to an eAP")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Embeddings {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub z: Vec<f64>,
}

#[derive(Clone, Debug)]
struct EapNodeCache {
    /// Message net on each node's raw attributes.
    msg_raw: Vec<ForwardCache>,
    /// Message net on each node's updated embedding (all but the last).
    msg_embedded: Vec<Option<ForwardCache>>,
    /// Update net per node.
    upd: Vec<ForwardCache>,
}

/// Activations needed to differentiate [`encode`].
#[derive(Clone, Debug)]
pub struct EncodeCache {
    nodes: Vec<EapNodeCache>,
    eap_msg: Vec<Vec<ForwardCache>>,
    eap_upd: Vec<ForwardCache>,
    cluster_msg: Vec<ForwardCache>,
    cluster_upd: ForwardCache,
}

fn add_into(acc: &mut [f64], v: &[f64]) {
    acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
}

/// One ascending-id pass over each eAP: node `n` becomes
/// `h(sum of f over its eAP neighbours) + raw_n`, where neighbours already
/// visited contribute their new embedding and the rest their raw attributes.
pub fn embed_nodes(nets: &GpgNets, input: &GraphInput) -> Result<Vec<Vec<f64>>, NnError> {
    Ok(encode_nodes(nets, input)?.0)
}

fn encode_nodes(
    nets: &GpgNets,
    input: &GraphInput,
) -> Result<(Vec<Vec<f64>>, Vec<EapNodeCache>), NnError> {
    let (f, h) = (&nets.message[0], &nets.update[0]);
    let mut x = input.attrs.clone();
    let mut caches = Vec::with_capacity(input.eap_nodes.len());
    for members in &input.eap_nodes {
        let k = members.len();
        let mut raw_msgs = Vec::with_capacity(k);
        let mut msg_raw = Vec::with_capacity(k);
        for &n in members {
            if input.attrs[n].len() != nets.attr_dim {
                return Err(NnError::Dimension {
                    expected: nets.attr_dim,
                    got: input.attrs[n].len(),
                });
            }
            let (m, c) = f.forward(&input.attrs[n])?;
            raw_msgs.push(m);
            msg_raw.push(c);
        }
        let mut new_msgs: Vec<Vec<f64>> = Vec::with_capacity(k);
        let mut msg_embedded = Vec::with_capacity(k);
        let mut upd = Vec::with_capacity(k);
        for j in 0..k {
            let mut m = vec![0.0; f.output_dim()];
            for msg in &new_msgs[..j] {
                add_into(&mut m, msg);
            }
            for msg in &raw_msgs[j + 1..] {
                add_into(&mut m, msg);
            }
            let (out, c) = h.forward(&m)?;
            upd.push(c);
            let n = members[j];
            x[n] = out
                .iter()
                .zip(&input.attrs[n])
                .map(|(a, b)| a + b)
                .collect();
            if j + 1 < k {
                let (msg, c) = f.forward(&x[n])?;
                new_msgs.push(msg);
                msg_embedded.push(Some(c));
            } else {
                msg_embedded.push(None);
            }
        }
        caches.push(EapNodeCache {
            msg_raw,
            msg_embedded,
            upd,
        });
    }
    Ok((x, caches))
}

/// Node, eAP and cluster embeddings. Summary nodes carry zero attributes,
/// so `y_b = h2(sum f2(x_n))` and `z = h3(sum f3(y_b))`.
pub fn encode(nets: &GpgNets, input: &GraphInput) -> Result<(Embeddings, EncodeCache), NnError> {
    let (x, node_caches) = encode_nodes(nets, input)?;
    let (f2, h2, f3, h3) = (
        &nets.message[1],
        &nets.update[1],
        &nets.message[2],
        &nets.update[2],
    );
    let mut y = Vec::with_capacity(input.eap_nodes.len());
    let mut eap_msg = Vec::with_capacity(input.eap_nodes.len());
    let mut eap_upd = Vec::with_capacity(input.eap_nodes.len());
    for members in &input.eap_nodes {
        let mut sum = vec![0.0; f2.output_dim()];
        let mut caches = Vec::with_capacity(members.len());
        for &n in members {
            let (m, c) = f2.forward(&x[n])?;
            add_into(&mut sum, &m);
            caches.push(c);
        }
        let (yb, c) = h2.forward(&sum)?;
        y.push(yb);
        eap_msg.push(caches);
        eap_upd.push(c);
    }
    let mut sum = vec![0.0; f3.output_dim()];
    let mut cluster_msg = Vec::with_capacity(y.len());
    for yb in &y {
        let (m, c) = f3.forward(yb)?;
        add_into(&mut sum, &m);
        cluster_msg.push(c);
    }
    let (z, cluster_upd) = h3.forward(&sum)?;
    Ok((
        Embeddings { x, y, z },
        EncodeCache {
            nodes: node_caches,
            eap_msg,
            eap_upd,
            cluster_msg,
            cluster_upd,
        },
    ))
}

/// Back-propagates embedding gradients through every encoder network,
/// accumulating into `grads`.
pub fn encode_backward(
    nets: &GpgNets,
    input: &GraphInput,
    cache: &EncodeCache,
    mut dx: Vec<Vec<f64>>,
    mut dy: Vec<Vec<f64>>,
    dz: &[f64],
    grads: &mut GpgGrads,
) -> Result<(), NnError> {
    let (f2, h2, f3, h3) = (
        &nets.message[1],
        &nets.update[1],
        &nets.message[2],
        &nets.update[2],
    );
    let dsum = h3.backward_into(&cache.cluster_upd, dz, &mut grads.update[2])?;
    for (b, c) in cache.cluster_msg.iter().enumerate() {
        let d = f3.backward_into(c, &dsum, &mut grads.message[2])?;
        add_into(&mut dy[b], &d);
    }
    for (b, members) in input.eap_nodes.iter().enumerate() {
        let dsum = h2.backward_into(&cache.eap_upd[b], &dy[b], &mut grads.update[1])?;
        for (c, &n) in cache.eap_msg[b].iter().zip(members) {
            let d = f2.backward_into(c, &dsum, &mut grads.message[1])?;
            add_into(&mut dx[n], &d);
        }
    }
    let (f1, h1) = (&nets.message[0], &nets.update[0]);
    for (members, nc) in input.eap_nodes.iter().zip(&cache.nodes) {
        let k = members.len();
        // Gradient reaching each node's aggregated message, filled from the
        // last node backwards: a node's embedding only feeds later nodes.
        let mut dm: Vec<Vec<f64>> = vec![Vec::new(); k];
        let mut later = vec![0.0; f1.output_dim()];
        for j in (0..k).rev() {
            let n = members[j];
            if let Some(c) = &nc.msg_embedded[j] {
                let d = f1.backward_into(c, &later, &mut grads.message[0])?;
                add_into(&mut dx[n], &d);
            }
            dm[j] = h1.backward_into(&nc.upd[j], &dx[n], &mut grads.update[0])?;
            add_into(&mut later, &dm[j]);
        }
        // Raw-attribute messages of node i feed every earlier node.
        let mut earlier = vec![0.0; f1.output_dim()];
        for i in 0..k {
            if i > 0 {
                f1.backward_into(&nc.msg_raw[i], &earlier, &mut grads.message[0])?;
            }
            add_into(&mut earlier, &dm[i]);
        }
    }
    Ok(())
}

/// eAP embeddings `h2(sum f2(x_n))` and the cluster embedding
/// `h3(sum f3(y_b))` from given node embeddings.
pub fn embed_eaps_and_cluster(
    nets: &GpgNets,
    x: &[Vec<f64>],
    eap_nodes: &[Vec<usize>],
) -> Result<(Vec<Vec<f64>>, Vec<f64>), NnError> {
    let (f2, h2, f3, h3) = (
        &nets.message[1],
        &nets.update[1],
        &nets.message[2],
        &nets.update[2],
    );
    let mut y = Vec::with_capacity(eap_nodes.len());
    for members in eap_nodes {
        let mut sum = vec![0.0; f2.output_dim()];
        for &n in members {
            add_into(&mut sum, &f2.predict(&x[n])?);
        }
        y.push(h2.predict(&sum)?);
    }
    let mut sum = vec![0.0; f3.output_dim()];
    for yb in &y {
        add_into(&mut sum, &f3.predict(yb)?);
    }
    let z = h3.predict(&sum)?;
    Ok((y, z))
}
