//! Decomposition of one convolution into independent per-element subtasks.

use nn_core::{conv_output_shape, NnError};

use crate::error::ParallelError;

/// Input window feeding one output element, in padded input coordinates.
/// Row/column ends are exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvArea {
    pub r_begin: usize,
    pub r_end: usize,
    pub c_begin: usize,
    pub c_end: usize,
}

/// One convolution subtask: the output element it produces and the input
/// area it reads. Tasks of one layer are pairwise output-disjoint and share
/// the immutable input and filter passed at execution time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvTask {
    pub out_row: usize,
    pub out_col: usize,
    pub area: ConvArea,
}

/// Number of convolution subtasks of a layer — one per output element and
/// the layer's maximum parallelism degree.
pub fn count_conv_tasks(
    input_shape: (usize, usize, usize),
    filter_shape: (usize, usize, usize),
    stride: usize,
    padding: usize,
) -> Result<usize, NnError> {
    let (_, ha, wa) = conv_output_shape(input_shape, filter_shape, stride, padding)?;
    Ok(ha * wa)
}

/// Convolution area of output element (i, j): rows [i*S, i*S + H_f),
/// columns [j*S, j*S + W_f) of the padded input.
pub fn conv_area(
    i: usize,
    j: usize,
    stride: usize,
    filter_h: usize,
    filter_w: usize,
    out_h: usize,
    out_w: usize,
) -> Result<ConvArea, ParallelError> {
    if i >= out_h || j >= out_w {
        return Err(ParallelError::OutOfRange {
            i,
            j,
            h: out_h,
            w: out_w,
        });
    }
    Ok(ConvArea {
        r_begin: i * stride,
        r_end: i * stride + filter_h,
        c_begin: j * stride,
        c_end: j * stride + filter_w,
    })
}

/// All subtasks of a convolution, one per output element in row-major order.
pub fn decompose_conv(
    input_shape: (usize, usize, usize),
    filter_shape: (usize, usize, usize),
    stride: usize,
    padding: usize,
) -> Result<Vec<ConvTask>, ParallelError> {
    let (_, ha, wa) = conv_output_shape(input_shape, filter_shape, stride, padding)?;
    let (_, fh, fw) = filter_shape;
    let mut tasks = Vec::with_capacity(ha * wa);
    for i in 0..ha {
        for j in 0..wa {
            tasks.push(ConvTask {
                out_row: i,
                out_col: j,
                area: conv_area(i, j, stride, fh, fw, ha, wa)?,
            });
        }
    }
    Ok(tasks)
}
