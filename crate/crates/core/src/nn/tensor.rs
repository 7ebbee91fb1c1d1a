use crate::{Error, Result};

/// `batch × tokens × channels` activations, row-major with channels fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    batch: usize,
    tokens: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(batch: usize, tokens: usize, channels: usize) -> Self {
        Tensor3 {
            batch,
            tokens,
            channels,
            data: vec![0.0; batch * tokens * channels],
        }
    }

    pub fn from_vec(batch: usize, tokens: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != batch * tokens * channels {
            return Err(Error::shape(
                "Tensor3::from_vec",
                format!("{batch}x{tokens}x{channels}"),
                format!("len {}", data.len()),
            ));
        }
        Ok(Tensor3 {
            batch,
            tokens,
            channels,
            data,
        })
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn tokens(&self) -> usize {
        self.tokens
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.batch, self.tokens, self.channels)
    }

    /// Number of channel vectors, `batch · tokens`.
    pub fn rows(&self) -> usize {
        self.batch * self.tokens
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.channels..(r + 1) * self.channels]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.channels..(r + 1) * self.channels]
    }

    pub fn shape_string(&self) -> String {
        format!("{}x{}x{}", self.batch, self.tokens, self.channels)
    }

    pub fn same_shape(&self, other: &Tensor3) -> bool {
        self.shape() == other.shape()
    }

    pub fn add_assign(&mut self, other: &Tensor3) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::shape("Tensor3::add", self.shape_string(), other.shape_string()));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Channel-wise concatenation of equally shaped (up to channels) tensors.
    pub fn concat_channels(parts: &[&Tensor3]) -> Result<Tensor3> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Parameter("concat of zero tensors".into()))?;
        let (b, t) = (first.batch, first.tokens);
        for p in parts {
            if p.batch != b || p.tokens != t {
                return Err(Error::shape("concat_channels", first.shape_string(), p.shape_string()));
            }
        }
        let c: usize = parts.iter().map(|p| p.channels).sum();
        let mut data = Vec::with_capacity(b * t * c);
        for r in 0..b * t {
            for p in parts {
                data.extend_from_slice(p.row(r));
            }
        }
        Tensor3::from_vec(b, t, c, data)
    }

    /// Splits the channel axis into equal chunks, in order.
    pub fn split_channels(&self, parts: usize) -> Result<Vec<Tensor3>> {
        if parts == 0 || self.channels % parts != 0 {
            return Err(Error::shape(
                "split_channels",
                self.shape_string(),
                format!("{parts} equal parts"),
            ));
        }
        let w = self.channels / parts;
        let mut out: Vec<Tensor3> = (0..parts).map(|_| Tensor3::zeros(self.batch, self.tokens, w)).collect();
        for r in 0..self.rows() {
            let row = self.row(r);
            for (i, o) in out.iter_mut().enumerate() {
                o.row_mut(r).copy_from_slice(&row[i * w..(i + 1) * w]);
            }
        }
        Ok(out)
    }
}
