//! Encoder, attention-residual bottleneck, 200-d embedding head and decoder.
//!
//! ```text
//! x ─ enc1 ─ enc2 ─ … ─ encN = X
//!      │                       ├─ reduce ─ mid ─ map ─ σ = A
//!      │                       └─ Z = relu(X + proj(X ⊙ A))
//!      │                               └─ gap ─ head = embedding
//!      │   expand(embedding) ─ dec1 ─ … ─ dec(N-1) ─(+enc1)─ decN ─ σ = x̂
//! ```

use super::{CaeConfig, ModelError};
use crate::numerics::{
    add, broadcast_mul, broadcast_mul_backward, conv2d_backward, conv2d_forward, dense_backward, dense_forward,
    global_avg_pool, global_avg_pool_backward, relu, relu_backward, sigmoid, sigmoid_backward, tconv2d_backward,
    tconv2d_forward, ConvGrads, ConvParams, DenseGrads, DenseParams, ParamInit, Scalar, Shape, TConvParams, Tensor,
};

/// Every trainable tensor of the auto-encoder. Also used to hold gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct CaeParams<T = f32> {
    pub encoder: Vec<ConvParams<T>>,
    pub attn_reduce: ConvParams<T>,
    pub attn_mid: ConvParams<T>,
    pub attn_map: ConvParams<T>,
    pub projection: ConvParams<T>,
    pub head: DenseParams<T>,
    pub expand: DenseParams<T>,
    pub decoder: Vec<TConvParams<T>>,
}

impl<T: Scalar> CaeParams<T> {
    /// `(name, values)` of every tensor in canonical order.
    pub fn tensors(&self) -> Vec<(String, &[T])> {
        let mut out: Vec<(String, &[T])> = Vec::new();
        fn pair<'a, T>(out: &mut Vec<(String, &'a [T])>, name: String, w: &'a [T], b: &'a [T]) {
            out.push((format!("{name}.weight"), w));
            out.push((format!("{name}.bias"), b));
        }
        for (i, l) in self.encoder.iter().enumerate() {
            pair(&mut out, format!("encoder.{}", i + 1), l.weight.data(), &l.bias);
        }
        pair(&mut out, "bottleneck.reduce".into(), self.attn_reduce.weight.data(), &self.attn_reduce.bias);
        pair(&mut out, "bottleneck.mid".into(), self.attn_mid.weight.data(), &self.attn_mid.bias);
        pair(&mut out, "bottleneck.map".into(), self.attn_map.weight.data(), &self.attn_map.bias);
        pair(&mut out, "bottleneck.proj".into(), self.projection.weight.data(), &self.projection.bias);
        pair(&mut out, "head".into(), &self.head.weight, &self.head.bias);
        pair(&mut out, "expand".into(), &self.expand.weight, &self.expand.bias);
        for (i, l) in self.decoder.iter().enumerate() {
            pair(&mut out, format!("decoder.{}", i + 1), l.weight.data(), &l.bias);
        }
        out
    }

    /// Mutable views of every tensor, in the same order as [`Self::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [T])> {
        let mut out: Vec<(String, &mut [T])> = Vec::new();
        fn pair<'a, T>(out: &mut Vec<(String, &'a mut [T])>, name: String, w: &'a mut [T], b: &'a mut [T]) {
            out.push((format!("{name}.weight"), w));
            out.push((format!("{name}.bias"), b));
        }
        for (i, l) in self.encoder.iter_mut().enumerate() {
            pair(&mut out, format!("encoder.{}", i + 1), l.weight.data_mut(), &mut l.bias);
        }
        pair(&mut out, "bottleneck.reduce".into(), self.attn_reduce.weight.data_mut(), &mut self.attn_reduce.bias);
        pair(&mut out, "bottleneck.mid".into(), self.attn_mid.weight.data_mut(), &mut self.attn_mid.bias);
        pair(&mut out, "bottleneck.map".into(), self.attn_map.weight.data_mut(), &mut self.attn_map.bias);
        pair(&mut out, "bottleneck.proj".into(), self.projection.weight.data_mut(), &mut self.projection.bias);
        pair(&mut out, "head".into(), &mut self.head.weight, &mut self.head.bias);
        pair(&mut out, "expand".into(), &mut self.expand.weight, &mut self.expand.bias);
        for (i, l) in self.decoder.iter_mut().enumerate() {
            pair(&mut out, format!("decoder.{}", i + 1), l.weight.data_mut(), &mut l.bias);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> CaeParams<U> {
        let conv = |p: &ConvParams<T>| ConvParams {
            weight: p.weight.cast(),
            bias: cast_vec(&p.bias),
            stride: p.stride,
            padding: p.padding,
        };
        let dense = |p: &DenseParams<T>| DenseParams {
            weight: cast_vec(&p.weight),
            bias: cast_vec(&p.bias),
            in_dim: p.in_dim,
            out_dim: p.out_dim,
        };
        CaeParams {
            encoder: self.encoder.iter().map(conv).collect(),
            attn_reduce: conv(&self.attn_reduce),
            attn_mid: conv(&self.attn_mid),
            attn_map: conv(&self.attn_map),
            projection: conv(&self.projection),
            head: dense(&self.head),
            expand: dense(&self.expand),
            decoder: self
                .decoder
                .iter()
                .map(|p| TConvParams {
                    weight: p.weight.cast(),
                    bias: cast_vec(&p.bias),
                    stride: p.stride,
                    padding: p.padding,
                    output_padding: p.output_padding,
                })
                .collect(),
        }
    }
}

fn cast_vec<T: Scalar, U: Scalar>(v: &[T]) -> Vec<U> {
    v.iter().map(|x| U::from_f64_lossy(x.as_f64())).collect()
}

fn conv_like<T: Scalar>(p: &ConvParams<T>, g: ConvGrads<T>) -> ConvParams<T> {
    ConvParams { weight: g.weight, bias: g.bias, stride: p.stride, padding: p.padding }
}

fn tconv_like<T: Scalar>(p: &TConvParams<T>, g: ConvGrads<T>) -> TConvParams<T> {
    TConvParams {
        weight: g.weight,
        bias: g.bias,
        stride: p.stride,
        padding: p.padding,
        output_padding: p.output_padding,
    }
}

fn dense_like<T: Scalar>(p: &DenseParams<T>, g: DenseGrads<T>) -> DenseParams<T> {
    DenseParams { weight: g.weight, bias: g.bias, in_dim: p.in_dim, out_dim: p.out_dim }
}

/// A configured auto-encoder and its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CaeModel<T = f32> {
    pub config: CaeConfig,
    pub params: CaeParams<T>,
}

/// Intermediate activations retained by [`CaeModel::forward_reconstruct`].
#[derive(Debug, Clone)]
pub struct ForwardCache<T = f32> {
    input: Tensor<T>,
    /// Post-ReLU output of each encoder stage.
    encoder: Vec<Tensor<T>>,
    reduce: Tensor<T>,
    mid: Tensor<T>,
    attention: Tensor<T>,
    gated: Tensor<T>,
    residual: Tensor<T>,
    pooled: Tensor<T>,
    embedding: Tensor<T>,
    /// Post-ReLU dense expansion, reshaped to the bottleneck grid.
    expanded: Tensor<T>,
    /// Post-ReLU output of each hidden decoder stage.
    decoder: Vec<Tensor<T>>,
    /// Last hidden decoder output plus the encoder stage-1 skip.
    skip_sum: Tensor<T>,
    output: Tensor<T>,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn embedding(&self) -> &Tensor<T> {
        &self.embedding
    }

    /// Output of the final encoder stage.
    pub fn bottleneck_input(&self) -> &Tensor<T> {
        self.encoder.last().expect("at least two encoder stages")
    }

    pub fn bottleneck_output(&self) -> &Tensor<T> {
        &self.residual
    }

    pub fn attention(&self) -> &Tensor<T> {
        &self.attention
    }
}

/// Builds the auto-encoder with seeded He-normal weights and zero biases.
pub fn build_cae<T: Scalar>(config: CaeConfig, seed: u64) -> Result<CaeModel<T>, ModelError> {
    config.validate()?;
    let mut init = ParamInit::new(seed);
    let k = config.kernel;
    let p = config.padding();
    let s = config.stride;
    let bs = config.bottleneck_stride;

    let mut encoder = Vec::with_capacity(config.stages());
    let mut cin = 3;
    for &c in &config.encoder_channels {
        encoder.push(init.conv(cin, c, k, s, p)?);
        cin = c;
    }
    let width = config.bottleneck_width();
    let [reduce, mid, map, proj] = <[usize; 4]>::try_from(config.bottleneck_channels.as_slice())
        .map_err(|_| ModelError::Config("bottleneck needs 4 filter counts".into()))?;
    let attn_reduce = init.conv(width, reduce, k, bs, p)?;
    let attn_mid = init.conv(reduce, mid, k, bs, p)?;
    let attn_map = init.conv(mid, map, k, bs, p)?;
    let projection = init.conv(width, proj, k, bs, p)?;
    let head = init.dense(width, config.embedding_dim)?;
    let (bh, bw) = config.bottleneck_extent();
    let expand = init.dense(config.embedding_dim, width * bh * bw)?;

    let mut decoder = Vec::with_capacity(config.stages());
    let mut cin = width;
    for &c in &config.decoder_channels {
        decoder.push(init.tconv(cin, c, k, s, p, config.output_padding())?);
        cin = c;
    }

    Ok(CaeModel {
        config,
        params: CaeParams { encoder, attn_reduce, attn_mid, attn_map, projection, head, expand, decoder },
    })
}

impl<T: Scalar> CaeModel<T> {
    pub fn embedding_dim(&self) -> usize {
        self.config.embedding_dim
    }

    /// Expected batch shape for `n` images.
    pub fn input_shape(&self, n: usize) -> Shape {
        Shape::new(n, 3, self.config.input_size.0, self.config.input_size.1)
    }

    pub fn cast<U: Scalar>(&self) -> CaeModel<U> {
        CaeModel { config: self.config.clone(), params: self.params.cast() }
    }

    fn check_batch(&self, batch: &Tensor<T>) -> Result<(), ModelError> {
        let want = self.input_shape(batch.shape().n);
        if batch.shape() != want {
            return Err(ModelError::InputShape { expected: want.to_string(), found: batch.shape().to_string() });
        }
        Ok(())
    }

    /// Encoder + bottleneck, returning all activations needed downstream.
    #[allow(clippy::type_complexity)]
    fn encode_parts(&self, batch: &Tensor<T>) -> Result<(Vec<Tensor<T>>, [Tensor<T>; 7]), ModelError> {
        let p = &self.params;
        let mut encoder = Vec::with_capacity(p.encoder.len());
        let mut h = batch.clone();
        for layer in &p.encoder {
            h = relu(&conv2d_forward(&h, layer)?);
            encoder.push(h.clone());
        }
        let reduce = relu(&conv2d_forward(&h, &p.attn_reduce)?);
        let mid = relu(&conv2d_forward(&reduce, &p.attn_mid)?);
        let attention = sigmoid(&conv2d_forward(&mid, &p.attn_map)?);
        let gated = broadcast_mul(&h, &attention)?;
        let residual = relu(&add(&h, &conv2d_forward(&gated, &p.projection)?)?);
        let pooled = global_avg_pool(&residual);
        let embedding = dense_forward(&pooled, &p.head)?;
        Ok((encoder, [reduce, mid, attention, gated, residual, pooled, embedding]))
    }

    /// Embeddings (`N × embedding_dim × 1 × 1`) from the encoder and bottleneck only.
    pub fn encode(&self, batch: &Tensor<T>) -> Result<Tensor<T>, ModelError> {
        self.check_batch(batch)?;
        let (_, [.., embedding]) = self.encode_parts(batch)?;
        Ok(embedding)
    }

    /// Full auto-encoder pass; reconstruction has the batch's shape.
    pub fn forward_reconstruct(&self, batch: &Tensor<T>) -> Result<(Tensor<T>, ForwardCache<T>), ModelError> {
        self.check_batch(batch)?;
        let p = &self.params;
        let (encoder, [reduce, mid, attention, gated, residual, pooled, embedding]) = self.encode_parts(batch)?;

        let (bh, bw) = self.config.bottleneck_extent();
        let n = batch.shape().n;
        let expanded = relu(&dense_forward(&embedding, &p.expand)?).reshape(Shape::new(
            n,
            self.config.bottleneck_width(),
            bh,
            bw,
        ))?;

        let stages = p.decoder.len();
        let mut decoder = Vec::with_capacity(stages - 1);
        let mut d = expanded.clone();
        for layer in &p.decoder[..stages - 1] {
            d = relu(&tconv2d_forward(&d, layer)?);
            decoder.push(d.clone());
        }
        let skip_sum = add(&d, &encoder[0])?;
        let output = sigmoid(&tconv2d_forward(&skip_sum, &p.decoder[stages - 1])?);

        let cache = ForwardCache {
            input: batch.clone(),
            encoder,
            reduce,
            mid,
            attention,
            gated,
            residual,
            pooled,
            embedding,
            expanded,
            decoder,
            skip_sum,
            output: output.clone(),
        };
        Ok((output, cache))
    }

    /// Parameter gradients given `dL/d(reconstruction)`.
    pub fn backward(&self, cache: &ForwardCache<T>, grad_output: &Tensor<T>) -> Result<CaeParams<T>, ModelError> {
        let p = &self.params;
        let stages = p.decoder.len();

        let g = sigmoid_backward(&cache.output, grad_output)?;
        let (g_skip, g_last) = tconv2d_backward(&cache.skip_sum, &p.decoder[stages - 1], &g)?;
        let mut dec_grads = vec![None; stages];
        dec_grads[stages - 1] = Some(tconv_like(&p.decoder[stages - 1], g_last));

        let mut g = g_skip.clone();
        for i in (0..stages - 1).rev() {
            let input = if i == 0 { &cache.expanded } else { &cache.decoder[i - 1] };
            let pre = relu_backward(&cache.decoder[i], &g)?;
            let (gx, gl) = tconv2d_backward(input, &p.decoder[i], &pre)?;
            dec_grads[i] = Some(tconv_like(&p.decoder[i], gl));
            g = gx;
        }

        let g = relu_backward(&cache.expanded, &g)?;
        let n = g.shape().n;
        let g = g.reshape(Shape::vector(n, p.expand.out_dim))?;
        let (g_emb, g_expand) = dense_backward(&cache.embedding, &p.expand, &g)?;
        let (g_pooled, g_head) = dense_backward(&cache.pooled, &p.head, &g_emb)?;
        let g_res = global_avg_pool_backward(cache.residual.shape(), &g_pooled)?;
        let g_pre = relu_backward(&cache.residual, &g_res)?;

        let x = cache.bottleneck_input();
        let (g_gated, g_proj) = conv2d_backward(&cache.gated, &p.projection, &g_pre)?;
        let (g_x_gate, g_att) = broadcast_mul_backward(x, &cache.attention, &g_gated)?;
        let g = sigmoid_backward(&cache.attention, &g_att)?;
        let (g_mid, g_map) = conv2d_backward(&cache.mid, &p.attn_map, &g)?;
        let g = relu_backward(&cache.mid, &g_mid)?;
        let (g_reduce, g_midp) = conv2d_backward(&cache.reduce, &p.attn_mid, &g)?;
        let g = relu_backward(&cache.reduce, &g_reduce)?;
        let (g_x_attn, g_red) = conv2d_backward(x, &p.attn_reduce, &g)?;
        let mut g = add(&add(&g_pre, &g_x_gate)?, &g_x_attn)?;

        let mut enc_grads = vec![None; p.encoder.len()];
        for i in (0..p.encoder.len()).rev() {
            if i == 0 {
                g = add(&g, &g_skip)?;
            }
            let pre = relu_backward(&cache.encoder[i], &g)?;
            let input = if i == 0 { &cache.input } else { &cache.encoder[i - 1] };
            let (gx, gl) = conv2d_backward(input, &p.encoder[i], &pre)?;
            enc_grads[i] = Some(conv_like(&p.encoder[i], gl));
            g = gx;
        }

        Ok(CaeParams {
            encoder: enc_grads.into_iter().map(|g| g.expect("every stage visited")).collect(),
            attn_reduce: conv_like(&p.attn_reduce, g_red),
            attn_mid: conv_like(&p.attn_mid, g_midp),
            attn_map: conv_like(&p.attn_map, g_map),
            projection: conv_like(&p.projection, g_proj),
            head: dense_like(&p.head, g_head),
            expand: dense_like(&p.expand, g_expand),
            decoder: dec_grads.into_iter().map(|g| g.expect("every stage visited")).collect(),
        })
    }
}

/// Splits an `N × D × 1 × 1` embedding tensor into per-image vectors.
pub fn embedding_rows<T: Scalar>(embeddings: &Tensor<T>) -> Vec<Vec<T>> {
    (0..embeddings.shape().n).map(|i| embeddings.sample(i).to_vec()).collect()
}
