import pandas as pd
from sklearn.preprocessing import MinMaxScaler
from sklearn.linear_model import LinearRegression

houses = pd.read_csv("houses.csv")
X = houses[["rooms", "area", "age"]]
y = houses["price"]
X = MinMaxScaler().fit_transform(X)
reg = LinearRegression()
reg.fit(X, y)
print(reg.score(X, y))
