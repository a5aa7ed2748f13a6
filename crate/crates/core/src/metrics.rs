//! Gaussian-windowed SSIM and paired-directory evaluation.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image_io::png_read_rgb;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

impl SsimParams {
    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window % 2 == 0 || self.window == 0 {
            return Err(Error::Domain(format!("SSIM window must be odd, got {}", self.window)));
        }
        if !(self.sigma > 0.0 && self.c1() > 0.0 && self.c2() > 0.0) {
            return Err(Error::Domain("SSIM sigma and constants must be positive".into()));
        }
        Ok(())
    }

    /// Normalised 1-D Gaussian taps.
    pub fn kernel(&self) -> Vec<f64> {
        let r = (self.window / 2) as f64;
        let raw: Vec<f64> = (0..self.window)
            .map(|i| (-((i as f64 - r).powi(2)) / (2.0 * self.sigma * self.sigma)).exp())
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / total).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Border {
    /// Only positions where the whole window fits inside the image.
    Valid,
    /// Mirror-pad so every pixel gets a centred window.
    Reflect,
}

fn dims(a: &Tensor, b: &Tensor) -> Result<(usize, usize, usize)> {
    if a.shape() != b.shape() {
        return Err(Error::Shape {
            op: "ssim",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    match *a.shape() {
        [c, h, w] => Ok((c, h, w)),
        _ => Err(Error::Contract(format!("ssim expects C x H x W, got {:?}", a.shape()))),
    }
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    if i < 0 {
        i = -i;
    }
    if i >= n {
        i = 2 * (n - 1) - i;
    }
    i as usize
}

/// Separable Gaussian filter of one plane. Output is `oh x ow`, where output
/// position (y, x) is centred on input pixel (y + off, x + off).
fn blur(plane: &[f64], h: usize, w: usize, k: &[f64], border: Border) -> (Vec<f64>, usize, usize) {
    let r = k.len() / 2;
    let (oh, ow, off) = match border {
        Border::Valid => (h + 1 - k.len(), w + 1 - k.len(), r as isize),
        Border::Reflect => (h, w, 0),
    };
    let at = |y: isize, x: isize| plane[reflect(y, h) * w + reflect(x, w)];
    // horizontal pass over every input row needed by the vertical pass
    let rows: Vec<isize> = match border {
        Border::Valid => (0..h as isize).collect(),
        Border::Reflect => (-(r as isize)..(h + r) as isize).collect(),
    };
    let row0 = rows[0];
    let mut horiz = vec![0.0; rows.len() * ow];
    for (ri, &y) in rows.iter().enumerate() {
        for x in 0..ow {
            let cx = x as isize + off;
            let mut s = 0.0;
            for (t, &kt) in k.iter().enumerate() {
                s += kt * at(y, cx + t as isize - r as isize);
            }
            horiz[ri * ow + x] = s;
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        let cy = y as isize + off;
        for x in 0..ow {
            let mut s = 0.0;
            for (t, &kt) in k.iter().enumerate() {
                let ri = (cy + t as isize - r as isize - row0) as usize;
                s += kt * horiz[ri * ow + x];
            }
            out[y * ow + x] = s;
        }
    }
    (out, oh, ow)
}

/// Channel-averaged local SSIM map.
fn local_map(a: &Tensor, b: &Tensor, p: &SsimParams, border: Border) -> Result<(Vec<f64>, usize, usize)> {
    p.validate()?;
    let (c, h, w) = dims(a, b)?;
    let too_small = match border {
        Border::Valid => h < p.window || w < p.window,
        Border::Reflect => h <= p.window / 2 || w <= p.window / 2,
    };
    if too_small {
        return Err(Error::Contract(format!(
            "ssim: {h}x{w} image is smaller than the {} px window",
            p.window
        )));
    }
    let k = p.kernel();
    let (c1, c2) = (p.c1(), p.c2());
    let plane = h * w;
    let mut acc: Vec<f64> = Vec::new();
    let (mut oh, mut ow) = (0, 0);
    for ch in 0..c {
        let pa: Vec<f64> = a.data()[ch * plane..(ch + 1) * plane].iter().map(|&v| v as f64).collect();
        let pb: Vec<f64> = b.data()[ch * plane..(ch + 1) * plane].iter().map(|&v| v as f64).collect();
        let prod = |f: fn(f64, f64) -> f64| pa.iter().zip(&pb).map(|(&x, &y)| f(x, y)).collect::<Vec<f64>>();
        let (mu_a, h2, w2) = blur(&pa, h, w, &k, border);
        let (mu_b, ..) = blur(&pb, h, w, &k, border);
        let (e_aa, ..) = blur(&prod(|x, _| x * x), h, w, &k, border);
        let (e_bb, ..) = blur(&prod(|_, y| y * y), h, w, &k, border);
        let (e_ab, ..) = blur(&prod(|x, y| x * y), h, w, &k, border);
        if acc.is_empty() {
            acc = vec![0.0; h2 * w2];
            (oh, ow) = (h2, w2);
        }
        for i in 0..acc.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            acc[i] += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
    }
    for v in &mut acc {
        *v /= c as f64;
    }
    Ok((acc, oh, ow))
}

/// Mean SSIM over all window positions that fit inside the image, averaged
/// over channels.
pub fn ssim(a: &Tensor, b: &Tensor, p: &SsimParams) -> Result<f64> {
    let (map, ..) = local_map(a, b, p, Border::Valid)?;
    Ok(map.iter().sum::<f64>() / map.len() as f64)
}

/// Mean local SSIM over the pixels where `mask` (`1 x H x W`) is set. Every
/// masked pixel gets a window centred on it; windows that cross the border
/// are mirror-padded, so holes touching the edge still count.
pub fn masked_ssim(a: &Tensor, b: &Tensor, mask: &Tensor, p: &SsimParams) -> Result<f64> {
    let (_, h, w) = dims(a, b)?;
    if mask.shape() != [1, h, w] {
        return Err(Error::Shape {
            op: "masked_ssim",
            lhs: a.shape().to_vec(),
            rhs: mask.shape().to_vec(),
        });
    }
    let (map, ..) = local_map(a, b, p, Border::Reflect)?;
    let picked: Vec<f64> = map.iter().zip(mask.data()).filter(|(_, &m)| m > 0.5).map(|(&v, _)| v).collect();
    if picked.is_empty() {
        return Err(Error::Degenerate("masked_ssim: mask selects no pixels".into()));
    }
    Ok(picked.iter().sum::<f64>() / picked.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    /// `(file name, ssim)` sorted by file name.
    pub pairs: Vec<(String, f64)>,
    pub mean: f64,
}

impl EvalReport {
    pub fn count(&self) -> usize {
        self.pairs.len()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("file,ssim\n");
        for (f, v) in &self.pairs {
            let _ = writeln!(s, "{f},{v:.8}");
        }
        let _ = writeln!(s, "mean,{:.8}", self.mean);
        s
    }
}

fn png_names(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.to_ascii_lowercase().ends_with(".png") && entry.path().is_file() {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

/// SSIM of every identically named PNG pair in two directories.
pub fn evaluate_dir(generated: &Path, target: &Path, p: &SsimParams) -> Result<EvalReport> {
    let gen_names = png_names(generated)?;
    let tgt_names = png_names(target)?;
    let orphans: Vec<String> = gen_names
        .iter()
        .filter(|n| tgt_names.binary_search(n).is_err())
        .map(|n| format!("{} (no target)", n))
        .chain(
            tgt_names
                .iter()
                .filter(|n| gen_names.binary_search(n).is_err())
                .map(|n| format!("{} (no generated image)", n)),
        )
        .collect();
    if !orphans.is_empty() {
        return Err(Error::Pairing(format!("unmatched files: {}", orphans.join(", "))));
    }
    if gen_names.is_empty() {
        return Err(Error::Pairing(format!(
            "no PNG pairs in {} and {}",
            generated.display(),
            target.display()
        )));
    }
    let pairs = gen_names
        .into_iter()
        .map(|n| {
            let a = png_read_rgb(&generated.join(&n))?;
            let b = png_read_rgb(&target.join(&n))?;
            let v = ssim(&a, &b, p)?;
            Ok((n, v))
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = pairs.iter().map(|(_, v)| v).sum::<f64>() / pairs.len() as f64;
    Ok(EvalReport { pairs, mean })
}
