use crate::autodiff::Tensor;
use crate::scalar::Scalar;
use crate::semantics::{SemanticsError, Shape};

/// One named column; `data` is `[n, flat_len(shape)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Column<T: Scalar = f64> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Tensor<T>,
}

impl<T: Scalar> Column<T> {
    /// Column from row-major values; the row count is inferred.
    pub fn new(name: &str, shape: Vec<usize>, values: Vec<T>) -> Result<Self, SemanticsError> {
        let width: usize = shape.iter().product();
        if width == 0 || values.is_empty() || !values.len().is_multiple_of(width) {
            return Err(SemanticsError::InvalidDataset(format!(
                "column `{name}`: {} values do not fill rows of width {width}",
                values.len()
            )));
        }
        let rows = values.len() / width;
        Ok(Self {
            name: name.to_string(),
            shape,
            data: Tensor::matrix(rows, width, values),
        })
    }

    pub fn rows(&self) -> usize {
        self.data.rows()
    }
}

/// A finite indexed dataset: the points of an indexing vertex are its rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T: Scalar = f64> {
    pub name: String,
    pub columns: Vec<Column<T>>,
    pub batch_size: usize,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(name: &str, columns: Vec<Column<T>>, batch_size: usize) -> Result<Self, SemanticsError> {
        let first = columns.first().ok_or_else(|| {
            SemanticsError::InvalidDataset(format!("dataset `{name}` has no columns"))
        })?;
        let n = first.rows();
        if let Some(c) = columns.iter().find(|c| c.rows() != n) {
            return Err(SemanticsError::InvalidDataset(format!(
                "dataset `{name}`: column `{}` has {} rows, expected {n}",
                c.name,
                c.rows()
            )));
        }
        for (i, c) in columns.iter().enumerate() {
            if columns[..i].iter().any(|o| o.name == c.name) {
                return Err(SemanticsError::InvalidDataset(format!(
                    "dataset `{name}`: duplicate column `{}`",
                    c.name
                )));
            }
        }
        if batch_size == 0 || batch_size > n {
            return Err(SemanticsError::InvalidDataset(format!(
                "dataset `{name}`: batch size {batch_size} outside 1..={n}"
            )));
        }
        Ok(Self {
            name: name.to_string(),
            columns,
            batch_size,
        })
    }

    pub fn len(&self) -> usize {
        self.columns[0].rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    /// Shape of a row: the tuple of column shapes.
    pub fn row_shape(&self) -> Shape {
        Shape::Tuple(
            self.columns
                .iter()
                .map(|c| Shape::Dims(c.shape.clone()))
                .collect(),
        )
    }

    /// Selected rows with all columns laid side by side.
    pub fn rows(&self, idx: &[usize]) -> Tensor<T> {
        let width: usize = self.columns.iter().map(|c| c.data.cols()).sum();
        let mut data = Vec::with_capacity(idx.len() * width);
        for &i in idx {
            for c in &self.columns {
                data.extend_from_slice(c.data.row(i));
            }
        }
        Tensor::matrix(idx.len(), width, data)
    }

    pub fn all_rows(&self) -> Tensor<T> {
        let idx: Vec<usize> = (0..self.len()).collect();
        self.rows(&idx)
    }

    /// A copy holding only the given rows.
    pub fn subset(&self, idx: &[usize]) -> Result<Self, SemanticsError> {
        let columns = self
            .columns
            .iter()
            .map(|c| Column {
                name: c.name.clone(),
                shape: c.shape.clone(),
                data: c.data.select_rows(idx),
            })
            .collect();
        Dataset::new(&self.name, columns, self.batch_size.min(idx.len().max(1)))
    }
}
